#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csp/schema.hpp"
#include "csp/sql_exec.hpp"
#include "csp/util.hpp"

namespace csp {

/// Clause-level canonical form used by em_match. Throws sql::ParseError.
struct CanonicalQuery {
  bool distinct = false;
  std::vector<std::string> select;  // sorted, unique
  std::vector<std::string> from;
  std::vector<std::string> join_on;
  std::vector<std::string> where;
  std::vector<std::string> group_by;
  std::vector<std::string> having;
  std::vector<std::string> order_by;  // sequence
  std::string limit;
  std::string set_op;
  std::vector<CanonicalQuery> next;  // zero or one

  friend bool operator==(const CanonicalQuery&, const CanonicalQuery&) = default;
};

CanonicalQuery canonicalize(std::string_view sql, const Schema& schema);

/// Clause sets must agree; ORDER BY must agree as a sequence. A prediction
/// that does not parse never matches.
bool em_match(std::string_view gold, std::string_view pred, const Schema& schema);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws DataError when the gold query does not execute.
bool ex_match(std::string_view gold, std::string_view pred, const std::string& db_id, Executor& executor);

enum class MetricKind { em, ex };
std::string to_string(MetricKind kind);

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// a(m, n) is accuracy on task n's test split after training through task m
/// (1-based). Lower triangle plus the a(i-1, i) superdiagonal.
struct AccuracyMatrix {
  MetricKind kind = MetricKind::em;
  int M = 0;
  std::vector<std::vector<std::optional<double>>> entries;  // M x M, m >= n
  std::vector<std::optional<double>> superdiagonal;         // index i-1 holds a(i-1, i); index 0 unused
  std::vector<std::optional<double>> reference;             // accuracy of the untrained model per task
  std::optional<double> combined;                           // accuracy on the union of all test splits after task M

  AccuracyMatrix() = default;
  AccuracyMatrix(MetricKind kind, int M);

  /// Routes m == n - 1 to the superdiagonal. Throws std::out_of_range for
  /// other undefined cells and std::invalid_argument for values outside [0, 1].
  void set(int m, int n, double value);
  std::optional<double> get(int m, int n) const;
  void set_reference(int n, double value);

  json to_json() const;
  static AccuracyMatrix from_json(const json& j);
};

struct Metrics {
  double acc_a = 0.0;
  std::optional<double> acc_w;
  std::optional<double> bwt;  // absent when M = 1
  std::optional<double> fwt;  // absent when M = 1
};

/// Throws MetricsError naming the first missing entry.
Metrics metrics(const AccuracyMatrix& matrix);

json metrics_json(const Metrics& m);
/// Percent with one decimal, "n/a" when absent.
std::string format_percent(std::optional<double> value);
std::string markdown_report(const AccuracyMatrix& em, const AccuracyMatrix& ex, const std::vector<std::string>& task_ids);

}  // namespace csp

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

struct sqlite3;

namespace csp {

/// The database file for a db_id does not exist. Distinct from SQL errors,
/// which are reported inside ExecOutcome.
class DatabaseMissing : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Value = std::variant<std::monostate, std::int64_t, double, std::string>;
using Row = std::vector<Value>;

std::string format_value(const Value& v);

enum class ExecStatus { ok, error, timeout };

std::string to_string(ExecStatus status);

struct ExecOutcome {
  ExecStatus status = ExecStatus::ok;
  std::vector<Row> rows;  // populated only when ok
  bool truncated = false;
  std::string error_message;  // populated only when error or timeout
  std::chrono::microseconds elapsed{0};

  bool ok() const { return status == ExecStatus::ok; }
};

/// A read-only SQLite connection. Owned by one worker at a time.
class Connection {
 public:
  explicit Connection(const std::filesystem::path& path);
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  ExecOutcome run(std::string_view sql, std::chrono::milliseconds timeout, std::size_t row_cap);

 private:
  sqlite3* db_ = nullptr;
};

/// Executes SQL against task databases. Keeps one cached connection per
/// db_id; not safe to share between threads.
class Executor {
 public:
  static constexpr std::size_t kDefaultRowCap = 1000;
  static constexpr std::chrono::milliseconds kDefaultTimeout{2000};

  explicit Executor(std::map<std::string, std::filesystem::path> databases, std::size_t row_cap = kDefaultRowCap);

  /// Throws DatabaseMissing when db_id is unknown or its file is absent.
  ExecOutcome execute(const std::string& db_id, std::string_view sql,
                      std::chrono::milliseconds timeout = kDefaultTimeout);

  bool has_database(const std::string& db_id) const;

 private:
  std::map<std::string, std::filesystem::path> databases_;
  std::map<std::string, std::unique_ptr<Connection>> connections_;
  std::size_t row_cap_;
};

enum class ResultComparison { equal, different, indeterminate };

/// ordered: row sequences must agree; otherwise rows compare as multisets.
/// Numbers match within relative tolerance 1e-6, text exactly. Truncated
/// inputs yield indeterminate. Throws std::invalid_argument for non-ok outcomes.
ResultComparison compare_results(const ExecOutcome& a, const ExecOutcome& b, bool ordered);

/// True only when compare_results is equal.
bool results_match(const ExecOutcome& a, const ExecOutcome& b, bool ordered);

/// Short tabular rendering used in prompts.
std::string format_rows(const std::vector<Row>& rows, std::size_t max_rows = 10);

}  // namespace csp

#pragma once

// Shared helpers for the unit and acceptance binaries: fixture paths,
// hand-rolled generators and brute-force oracles that share no code with
// the library routines they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "csp/cl_eval.hpp"
#include "csp/dataset_io.hpp"
#include "csp/distill.hpp"
#include "csp/util.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path fixture_root() { return fs::path(CSP_FIXTURE_DIR); }
inline fs::path stream_config() { return fixture_root() / "stream" / "stream.json"; }
inline fs::path mock_dir() { return fixture_root() / "mock"; }

inline const csp::TaskStream& fixture_stream() {
  static const csp::TaskStream stream = csp::load_task_stream(stream_config());
  return stream;
}

/// Every gold SQL in the fixture stream with its db_id.
inline std::vector<std::pair<std::string, std::string>> corpus() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& t : fixture_stream().tasks)
    for (const auto* split : {&t.train, &t.dev, &t.test})
      for (const auto& s : *split) out.emplace_back(s.sql, s.db_id);
  return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("csp-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                                         std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// ---- oracles ----

/// Plain recursive Levenshtein with a memo table.
inline std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  auto go = [&](auto&& self, std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = self(self, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, self(self, i + 1, j) + 1);
    best = std::min(best, self(self, i, j + 1) + 1);
    return memo[key] = best;
  };
  return go(go, 0, 0);
}

/// Membership by linear scans over plain string lists.
inline std::vector<std::string> bias_oracle(const std::vector<std::string>& current,
                                            const std::vector<std::vector<std::string>>& priors) {
  std::vector<std::string> out;
  for (const auto& p : priors)
    for (const auto& s : p) {
      bool in_current = false;
      for (const auto& c : current) in_current = in_current || c == s;
      bool seen = false;
      for (const auto& o : out) seen = seen || o == s;
      if (!in_current && !seen) out.push_back(s);
    }
  std::sort(out.begin(), out.end());
  return out;
}

struct MetricOracle {
  double acc_a = 0.0;
  std::optional<double> bwt;
  std::optional<double> fwt;
};

/// The four formulas looped verbatim over a dense (M+1)x(M+1) 1-based table.
inline MetricOracle metrics_oracle(const std::vector<std::vector<double>>& a, const std::vector<double>& ref, int M) {
  MetricOracle o;
  double s = 0.0;
  for (int i = 1; i <= M; ++i) s += a[M][i];
  o.acc_a = s / M;
  if (M > 1) {
    double b = 0.0;
    for (int i = 1; i <= M - 1; ++i) b += a[M][i] - a[i][i];
    o.bwt = b / (M - 1);
    double f = 0.0;
    for (int i = 2; i <= M; ++i) f += a[i - 1][i] - ref[i];
    o.fwt = f / (M - 1);
  }
  return o;
}

/// Summed -log p(target token) per item, averaged over items.
inline double ce_oracle(const csp::SequenceModel& model, const std::vector<csp::SeqItem>& items) {
  double total = 0.0;
  for (const auto& it : items) {
    const auto d = model.distributions(it.input, it.target);
    for (std::size_t j = 0; j < it.target.size(); ++j)
      total -= std::log(d[j][static_cast<std::size_t>(it.target[j])]);
  }
  return total / static_cast<double>(items.size());
}

/// sum_i sum_j sum_v p' ln(p'/p), averaged over items.
inline double kl_oracle(const csp::SequenceModel& teacher, const csp::SequenceModel& student,
                        const std::vector<csp::SeqItem>& items) {
  double total = 0.0;
  for (const auto& it : items) {
    const auto pt = teacher.distributions(it.input, it.target);
    const auto ps = student.distributions(it.input, it.target);
    for (std::size_t j = 0; j < pt.size(); ++j)
      for (std::size_t v = 0; v < pt[j].size(); ++v)
        if (pt[j][v] > 0.0) total += pt[j][v] * std::log(pt[j][v] / ps[j][v]);
  }
  return total / static_cast<double>(items.size());
}

/// A model that returns the same distribution at every position.
class FixedModel : public csp::SequenceModel {
 public:
  explicit FixedModel(std::vector<double> p) : p_(std::move(p)) {}
  int vocab_size() const override { return static_cast<int>(p_.size()); }
  std::vector<double>& params() override { return theta_; }
  const std::vector<double>& params() const override { return theta_; }
  csp::Distributions distributions(const std::vector<int>&, const std::vector<int>& target) const override {
    return csp::Distributions(target.size(), p_);
  }
  void backward(const std::vector<int>&, const std::vector<int>&, const csp::Distributions&,
                std::vector<double>&) const override {}
  std::unique_ptr<csp::SequenceModel> clone() const override { return std::make_unique<FixedModel>(*this); }

 private:
  std::vector<double> p_;
  std::vector<double> theta_;
};

// ---- generators ----

/// Random sequence items over vocabulary size V.
inline std::vector<csp::SeqItem> random_items(csp::Rng& rng, int V, int count, csp::Source source) {
  std::vector<csp::SeqItem> items;
  for (int i = 0; i < count; ++i) {
    csp::SeqItem it;
    it.source = source;
    const int in_len = 1 + static_cast<int>(rng.below(6));
    const int out_len = 1 + static_cast<int>(rng.below(5));
    for (int k = 0; k < in_len; ++k) it.input.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(V))));
    for (int k = 0; k < out_len; ++k) it.target.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(V))));
    items.push_back(std::move(it));
  }
  return items;
}

/// Random skeleton strings built from a small grammar of clauses.
inline std::string random_skeleton_sql(csp::Rng& rng) {
  static const std::vector<std::string> selects = {"[COL]", "[COL], [COL]", "count(*)", "avg([COL])", "*"};
  static const std::vector<std::string> wheres = {"", " WHERE [COL] = [VAL]", " WHERE [COL] > [VAL]",
                                                  " WHERE [COL] = [VAL] AND [COL] < [VAL]",
                                                  " WHERE [COL] IN (SELECT [COL] FROM [TAB])",
                                                  " WHERE [COL] LIKE [VAL]"};
  static const std::vector<std::string> tails = {"", " GROUP BY [COL]", " ORDER BY [COL] DESC LIMIT [VAL]",
                                                 " GROUP BY [COL] HAVING count(*) > [VAL]", " ORDER BY [COL]"};
  std::string from = rng.below(3) == 0 ? "[TAB] JOIN [TAB] ON [COL] = [COL]" : "[TAB]";
  return "SELECT " + selects[rng.below(selects.size())] + " FROM " + from + wheres[rng.below(wheres.size())] +
         tails[rng.below(tails.size())];
}

}  // namespace testsupport

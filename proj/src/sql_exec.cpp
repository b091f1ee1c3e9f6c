#include "csp/sql_exec.hpp"

#include <sqlite3.h>

#include <cmath>
#include <sstream>

#include "csp/util.hpp"

namespace csp {

std::string to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::ok: return "ok";
    case ExecStatus::error: return "error";
    case ExecStatus::timeout: return "timeout";
  }
  return "error";
}

std::string format_value(const Value& v) {
  if (std::holds_alternative<std::monostate>(v)) return "NULL";
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) {
    std::ostringstream ss;
    ss.precision(15);
    ss << *d;
    return ss.str();
  }
  return std::get<std::string>(v);
}

Connection::Connection(const std::filesystem::path& path) {
  const std::string uri = "file:" + path.string() + "?mode=ro";
  int rc = sqlite3_open_v2(uri.c_str(), &db_, SQLITE_OPEN_READONLY | SQLITE_OPEN_URI, nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw DatabaseMissing("cannot open database " + path.string() + ": " + msg);
  }
  sqlite3_exec(db_, "PRAGMA query_only = 1", nullptr, nullptr, nullptr);
}

Connection::~Connection() { sqlite3_close(db_); }

namespace {

struct Deadline {
  std::chrono::steady_clock::time_point at;
  bool hit = false;
};

int progress_check(void* arg) {
  auto* d = static_cast<Deadline*>(arg);
  if (std::chrono::steady_clock::now() >= d->at) {
    d->hit = true;
    return 1;
  }
  return 0;
}

class Statement {
 public:
  Statement() = default;
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;
  sqlite3_stmt** out() { return &stmt_; }
  sqlite3_stmt* get() const { return stmt_; }

 private:
  sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace

ExecOutcome Connection::run(std::string_view sql, std::chrono::milliseconds timeout, std::size_t row_cap) {
  const auto start = std::chrono::steady_clock::now();
  ExecOutcome out;
  Deadline deadline{start + timeout};
  sqlite3_progress_handler(db_, 1000, &progress_check, &deadline);

  auto finish = [&](ExecStatus status, std::string message) {
    sqlite3_progress_handler(db_, 0, nullptr, nullptr);
    out.status = status;
    if (status != ExecStatus::ok) {
      out.rows.clear();
      out.truncated = false;
      out.error_message = std::move(message);
    }
    out.elapsed = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
    return out;
  };

  Statement stmt;
  const char* tail = nullptr;
  int rc = sqlite3_prepare_v2(db_, sql.data(), static_cast<int>(sql.size()), stmt.out(), &tail);
  if (rc != SQLITE_OK) {
    if (deadline.hit) return finish(ExecStatus::timeout, "query exceeded timeout");
    return finish(ExecStatus::error, sqlite3_errmsg(db_));
  }
  if (!stmt.get()) return finish(ExecStatus::error, "empty statement");
  if (tail && !trim(std::string_view(tail, static_cast<std::size_t>(sql.data() + sql.size() - tail))).empty())
    return finish(ExecStatus::error, "multiple statements are not supported");
  if (!sqlite3_stmt_readonly(stmt.get())) return finish(ExecStatus::error, "statement is not read-only");

  const int ncol = sqlite3_column_count(stmt.get());
  while (true) {
    rc = sqlite3_step(stmt.get());
    if (rc == SQLITE_DONE) break;
    if (rc != SQLITE_ROW) {
      if (deadline.hit || rc == SQLITE_INTERRUPT) return finish(ExecStatus::timeout, "query exceeded timeout");
      return finish(ExecStatus::error, sqlite3_errmsg(db_));
    }
    if (out.rows.size() >= row_cap) {
      out.truncated = true;
      break;
    }
    Row row;
    row.reserve(static_cast<std::size_t>(ncol));
    for (int c = 0; c < ncol; ++c) {
      switch (sqlite3_column_type(stmt.get(), c)) {
        case SQLITE_NULL: row.emplace_back(std::monostate{}); break;
        case SQLITE_INTEGER: row.emplace_back(static_cast<std::int64_t>(sqlite3_column_int64(stmt.get(), c))); break;
        case SQLITE_FLOAT: row.emplace_back(sqlite3_column_double(stmt.get(), c)); break;
        default: {
          const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(stmt.get(), c));
          row.emplace_back(std::string(text ? text : ""));
        }
      }
    }
    out.rows.push_back(std::move(row));
  }
  return finish(ExecStatus::ok, {});
}

Executor::Executor(std::map<std::string, std::filesystem::path> databases, std::size_t row_cap)
    : databases_(std::move(databases)), row_cap_(row_cap) {}

bool Executor::has_database(const std::string& db_id) const {
  auto it = databases_.find(db_id);
  return it != databases_.end() && std::filesystem::exists(it->second);
}

ExecOutcome Executor::execute(const std::string& db_id, std::string_view sql, std::chrono::milliseconds timeout) {
  auto conn = connections_.find(db_id);
  if (conn == connections_.end()) {
    auto it = databases_.find(db_id);
    if (it == databases_.end()) throw DatabaseMissing("unknown database: " + db_id);
    if (!std::filesystem::exists(it->second))
      throw DatabaseMissing("database file missing for " + db_id + ": " + it->second.string());
    conn = connections_.emplace(db_id, std::make_unique<Connection>(it->second)).first;
  }
  return conn->second->run(sql, timeout, row_cap_);
}

namespace {

bool values_equal(const Value& a, const Value& b) {
  const bool a_null = std::holds_alternative<std::monostate>(a);
  const bool b_null = std::holds_alternative<std::monostate>(b);
  if (a_null || b_null) return a_null && b_null;
  const bool a_text = std::holds_alternative<std::string>(a);
  const bool b_text = std::holds_alternative<std::string>(b);
  if (a_text || b_text) return a_text && b_text && std::get<std::string>(a) == std::get<std::string>(b);
  auto num = [](const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    return std::get<double>(v);
  };
  if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b))
    return std::get<std::int64_t>(a) == std::get<std::int64_t>(b);
  const double x = num(a), y = num(b);
  if (x == y) return true;
  return std::fabs(x - y) <= 1e-6 * std::max(std::fabs(x), std::fabs(y));
}

bool rows_equal(const Row& a, const Row& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!values_equal(a[i], b[i])) return false;
  return true;
}

}  // namespace

ResultComparison compare_results(const ExecOutcome& a, const ExecOutcome& b, bool ordered) {
  if (!a.ok() || !b.ok()) throw std::invalid_argument("compare_results requires two successful outcomes");
  if (a.truncated || b.truncated) return ResultComparison::indeterminate;
  if (a.rows.size() != b.rows.size()) return ResultComparison::different;
  if (ordered) {
    for (std::size_t i = 0; i < a.rows.size(); ++i)
      if (!rows_equal(a.rows[i], b.rows[i])) return ResultComparison::different;
    return ResultComparison::equal;
  }
  std::vector<bool> used(b.rows.size(), false);
  for (const auto& row : a.rows) {
    bool found = false;
    for (std::size_t j = 0; j < b.rows.size(); ++j) {
      if (!used[j] && rows_equal(row, b.rows[j])) {
        used[j] = true;
        found = true;
        break;
      }
    }
    if (!found) return ResultComparison::different;
  }
  return ResultComparison::equal;
}

bool results_match(const ExecOutcome& a, const ExecOutcome& b, bool ordered) {
  return compare_results(a, b, ordered) == ResultComparison::equal;
}

std::string format_rows(const std::vector<Row>& rows, std::size_t max_rows) {
  if (rows.empty()) return "(no rows)";
  std::string out;
  for (std::size_t i = 0; i < rows.size() && i < max_rows; ++i) {
    std::vector<std::string> cells;
    for (const auto& v : rows[i]) cells.push_back(format_value(v));
    out += "(" + join(cells, ", ") + ")\n";
  }
  if (rows.size() > max_rows) out += "... " + std::to_string(rows.size() - max_rows) + " more rows\n";
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

}  // namespace csp

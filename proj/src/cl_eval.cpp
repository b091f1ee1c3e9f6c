#include "csp/cl_eval.hpp"

#include <algorithm>
#include <cstdio>

#include "csp/skeletonizer.hpp"
#include "csp/sql.hpp"

namespace csp {

namespace {

using sql::ParsedSql;
using sql::Range;
using sql::Role;

struct Renderer {
  const ParsedSql& parsed;
  std::vector<std::string> column_names;  // per token, resolved "table.column"

  Renderer(const ParsedSql& p, const Schema& schema) : parsed(p), column_names(p.tokens.size()) {
    const auto resolved = resolve_columns(p, schema);
    for (std::size_t i = 0; i < p.columns.size(); ++i) {
      const auto& r = resolved[i];
      const auto& tok = p.tokens[p.columns[i].token];
      column_names[p.columns[i].token] =
          r.column >= 0 ? to_lower(schema.tables[static_cast<std::size_t>(r.table)] + "." +
                                   schema.columns[static_cast<std::size_t>(r.column)].name)
                        : to_lower(tok.text);
    }
  }

  std::string render(const Range& range) const {
    std::vector<std::string> out;
    for (std::size_t i = range.begin; i < range.end; ++i) {
      const auto& tok = parsed.tokens[i];
      switch (parsed.roles[i]) {
        case Role::qualifier:
        case Role::qualifier_dot:
        case Role::alias_def:
        case Role::alias_as:
        case Role::terminator: continue;
        case Role::keyword: out.push_back(to_upper(tok.text)); break;
        case Role::function_name:
        case Role::type_name:
        case Role::table_ref: out.push_back(to_lower(tok.text)); break;
        case Role::column_ref: out.push_back(column_names[i]); break;
        case Role::literal:
          out.push_back(sql::is_string_literal(tok) ? "'" + sql::literal_value(tok) + "'" : tok.text);
          break;
        case Role::op:
          out.push_back(tok.text == "<>" ? "!=" : tok.text == "==" ? "=" : to_upper(tok.text));
          break;
        default: out.push_back(tok.text);
      }
    }
    // symmetric equality between two single operands compares either way round
    if (out.size() == 3 && out[1] == "=" && out[2] < out[0]) std::swap(out[0], out[2]);
    return join(out, " ");
  }

  std::vector<std::string> render_set(const std::vector<Range>& ranges) const {
    std::vector<std::string> out;
    for (const auto& r : ranges) out.push_back(render(r));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  CanonicalQuery build(const sql::Query& q) const {
    CanonicalQuery c;
    const auto& core = q.core;
    c.distinct = core.distinct;
    c.select = render_set(core.select_items);
    c.from = render_set(core.from_items);
    c.join_on = render_set(core.join_conditions);
    c.where = render_set(core.where);
    c.group_by = render_set(core.group_by);
    c.having = render_set(core.having);
    for (const auto& o : core.order_by) c.order_by.push_back(render(o.expr) + (o.descending ? " DESC" : " ASC"));
    if (core.limit) c.limit = render(*core.limit);
    c.set_op = q.set_op;
    if (q.next) c.next.push_back(build(*q.next));
    return c;
  }
};

}  // namespace

CanonicalQuery canonicalize(std::string_view text, const Schema& schema) {
  const ParsedSql parsed = sql::parse(text);
  return Renderer(parsed, schema).build(*parsed.root);
}

bool em_match(std::string_view gold, std::string_view pred, const Schema& schema) {
  const CanonicalQuery g = canonicalize(gold, schema);
  try {
    return canonicalize(pred, schema) == g;
  } catch (const sql::ParseError&) {
    return false;
  }
}

bool ex_match(std::string_view gold, std::string_view pred, const std::string& db_id, Executor& executor) {
  const ExecOutcome g = executor.execute(db_id, gold);
  if (!g.ok()) throw DataError("gold query fails on " + db_id + ": " + g.error_message);
  const ExecOutcome p = executor.execute(db_id, pred);
  if (!p.ok()) return false;
  bool ordered = false;
  try {
    ordered = sql::parse(gold).outer_order_by();
  } catch (const sql::ParseError&) {
    ordered = false;
  }
  return compare_results(g, p, ordered) == ResultComparison::equal;
}

std::string to_string(MetricKind kind) { return kind == MetricKind::em ? "EM" : "EX"; }

AccuracyMatrix::AccuracyMatrix(MetricKind k, int m)
    : kind(k),
      M(m),
      entries(static_cast<std::size_t>(m), std::vector<std::optional<double>>(static_cast<std::size_t>(m))),
      superdiagonal(static_cast<std::size_t>(m)),
      reference(static_cast<std::size_t>(m)) {
  if (m < 1) throw std::invalid_argument("M must be >= 1");
}

namespace {

void check_value(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("accuracy outside [0, 1]");
}

}  // namespace

void AccuracyMatrix::set(int m, int n, double value) {
  check_value(value);
  if (n < 1 || n > M || m > M) throw std::out_of_range("cell outside the matrix");
  if (m == n - 1) {
    if (m < 1) throw std::out_of_range("a(0, 1) is not defined");
    superdiagonal[static_cast<std::size_t>(n - 1)] = value;
    return;
  }
  if (m < n) throw std::out_of_range("cell above the superdiagonal");
  entries[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(n - 1)] = value;
}

std::optional<double> AccuracyMatrix::get(int m, int n) const {
  if (n < 1 || n > M || m < 1 || m > M) return std::nullopt;
  if (m == n - 1) return superdiagonal[static_cast<std::size_t>(n - 1)];
  if (m < n) return std::nullopt;
  return entries[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(n - 1)];
}

void AccuracyMatrix::set_reference(int n, double value) {
  check_value(value);
  if (n < 1 || n > M) throw std::out_of_range("task outside the matrix");
  reference[static_cast<std::size_t>(n - 1)] = value;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

}  // namespace

json AccuracyMatrix::to_json() const {
  json rows = json::array();
  for (const auto& row : entries) {
    json r = json::array();
    for (const auto& v : row) r.push_back(opt(v));
    rows.push_back(r);
  }
  json sup = json::array();
  for (int i = 2; i <= M; ++i) sup.push_back(opt(superdiagonal[static_cast<std::size_t>(i - 1)]));
  json ref = json::array();
  for (const auto& v : reference) ref.push_back(opt(v));
  return json{{"kind", to_string(kind)}, {"M", M},           {"entries", rows},
              {"superdiagonal", sup},    {"reference", ref}, {"combined", opt(combined)}};
}

AccuracyMatrix AccuracyMatrix::from_json(const json& j) {
  const std::string k = j.at("kind").get<std::string>();
  if (k != "EM" && k != "EX") throw std::invalid_argument("unknown metric kind " + k);
  AccuracyMatrix a(k == "EM" ? MetricKind::em : MetricKind::ex, j.at("M").get<int>());
  const auto& rows = j.at("entries");
  for (std::size_t m = 0; m < rows.size() && m < a.entries.size(); ++m)
    for (std::size_t n = 0; n < rows[m].size() && n < a.entries.size(); ++n) a.entries[m][n] = opt_from(rows[m][n]);
  const auto& sup = j.value("superdiagonal", json::array());
  for (std::size_t i = 0; i < sup.size() && i + 1 < a.superdiagonal.size(); ++i)
    a.superdiagonal[i + 1] = opt_from(sup[i]);
  const auto& ref = j.value("reference", json::array());
  for (std::size_t i = 0; i < ref.size() && i < a.reference.size(); ++i) a.reference[i] = opt_from(ref[i]);
  if (j.contains("combined")) a.combined = opt_from(j["combined"]);
  return a;
}

Metrics metrics(const AccuracyMatrix& a) {
  if (a.M < 1) throw MetricsError("empty accuracy matrix");
  auto need = [&](int m, int n) {
    auto v = a.get(m, n);
    if (!v) throw MetricsError("missing a(" + std::to_string(m) + ", " + std::to_string(n) + ")");
    return *v;
  };
  const int M = a.M;
  Metrics r;
  double s = 0.0;
  for (int i = 1; i <= M; ++i) s += need(M, i);
  r.acc_a = s / M;
  r.acc_w = a.combined;
  if (M > 1) {
    double b = 0.0, f = 0.0;
    for (int i = 1; i < M; ++i) b += need(M, i) - need(i, i);
    for (int i = 2; i <= M; ++i) {
      const auto& ref = a.reference[static_cast<std::size_t>(i - 1)];
      if (!ref) throw MetricsError("missing reference accuracy for task " + std::to_string(i));
      f += need(i - 1, i) - *ref;
    }
    r.bwt = b / (M - 1);
    r.fwt = f / (M - 1);
  }
  return r;
}

json metrics_json(const Metrics& m) {
  return json{{"ACC_a", m.acc_a}, {"ACC_w", opt(m.acc_w)}, {"BWT", opt(m.bwt)}, {"FWT", opt(m.fwt)}};
}

std::string format_percent(std::optional<double> value) {
  if (!value) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *value * 100.0);
  return buf;
}

std::string markdown_report(const AccuracyMatrix& em, const AccuracyMatrix& ex, const std::vector<std::string>& task_ids) {
  std::string out = "# Continual evaluation\n\n";
  out += "| Metric | ACC_a | ACC_w | BWT | FWT |\n|---|---|---|---|---|\n";
  for (const auto* a : {&em, &ex}) {
    const Metrics m = metrics(*a);
    out += "| " + to_string(a->kind) + " | " + format_percent(m.acc_a) + " | " + format_percent(m.acc_w) + " | " +
           format_percent(m.bwt) + " | " + format_percent(m.fwt) + " |\n";
  }
  for (const auto* a : {&em, &ex}) {
    out += "\n## " + to_string(a->kind) + " accuracy matrix\n\nRows: after training task m. Columns: test split of task n.\n\n|";
    for (int n = 1; n <= a->M; ++n) out += " | " + (n - 1 < static_cast<int>(task_ids.size()) ? task_ids[static_cast<std::size_t>(n - 1)] : std::to_string(n));
    out += " |\n|---";
    for (int n = 1; n <= a->M; ++n) out += "|---";
    out += "|\n";
    for (int m = 1; m <= a->M; ++m) {
      out += "| " + std::to_string(m);
      for (int n = 1; n <= a->M; ++n) {
        auto v = a->get(m, n);
        out += " | " + (v ? format_percent(v) : std::string(m < n - 1 ? "" : "n/a"));
      }
      out += " |\n";
    }
    out += "| reference";
    for (int n = 1; n <= a->M; ++n) out += " | " + format_percent(a->reference[static_cast<std::size_t>(n - 1)]);
    out += " |\n";
  }
  return out;
}

}  // namespace csp

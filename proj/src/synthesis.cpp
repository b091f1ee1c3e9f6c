#include "csp/synthesis.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

namespace csp {

std::string to_string(SwapProvenance p) {
  return p == SwapProvenance::same_column_value ? "same-column-value" : "same-table-column";
}

namespace {

std::string quote_ident(const std::string& name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string sql_literal(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) {
    std::string out = "'";
    for (char c : *s) {
      if (c == '\'') out += '\'';
      out += c;
    }
    return out + "'";
  }
  return format_value(v);
}

}  // namespace

std::string apply_edits(std::string_view text, std::vector<TextEdit> edits) {
  std::sort(edits.begin(), edits.end(), [](const TextEdit& a, const TextEdit& b) { return a.begin < b.begin; });
  std::string out;
  std::size_t pos = 0;
  for (const auto& e : edits) {
    if (e.begin < pos) throw std::invalid_argument("overlapping edits");
    out.append(text.substr(pos, e.begin - pos));
    out += e.text;
    pos = e.end;
  }
  out.append(text.substr(pos));
  return out;
}

std::vector<SwapCandidate> swap_candidates(const TaskSample& sample, const Schema& schema, Executor& executor,
                                           std::uint64_t seed) {
  const sql::ParsedSql parsed = sql::parse(sample.sql);
  const auto resolved = resolve_columns(parsed, schema);
  const auto qlinks = link_question(sample.question, parsed, schema);
  Rng rng(seed);
  std::vector<SwapCandidate> out;

  for (const auto& link : qlinks) {
    if (link.kind == LinkKind::value) {
      if (link.column < 0 || link.literal.find('%') != std::string::npos) continue;
      std::vector<TextEdit> edits;
      for (std::size_t li : parsed.literals) {
        if (parsed.tokens[li].text != link.literal) continue;
        edits.push_back({parsed.tokens[li].begin, parsed.tokens[li].end, {}});
      }
      if (edits.empty()) continue;
      const Column& col = schema.columns[static_cast<std::size_t>(link.column)];
      const std::string& table = schema.tables[static_cast<std::size_t>(col.table)];
      auto r = executor.execute(schema.db_id, "SELECT DISTINCT " + quote_ident(col.name) + " FROM " +
                                                  quote_ident(table) + " WHERE " + quote_ident(col.name) +
                                                  " IS NOT NULL ORDER BY 1");
      if (!r.ok()) continue;
      std::vector<Value> pool;
      for (auto& row : r.rows) {
        const std::string shown = format_value(row[0]);
        if (iequals(shown, link.surface) || sql_literal(row[0]) == link.literal) continue;
        pool.push_back(row[0]);
      }
      if (pool.size() > kValuePoolCap) {
        rng.shuffle(pool);
        pool.resize(kValuePoolCap);
      }
      for (const auto& v : pool) {
        SwapCandidate c;
        c.link = link;
        c.replacement = format_value(v);
        c.sql_text = sql_literal(v);
        c.sql_edits = edits;
        for (auto& e : c.sql_edits) e.text = c.sql_text;
        c.provenance = SwapProvenance::same_column_value;
        out.push_back(std::move(c));
      }
    } else if (link.kind == LinkKind::column) {
      std::vector<TextEdit> edits;
      for (std::size_t i = 0; i < parsed.columns.size(); ++i) {
        if (resolved[i].column != link.column) continue;
        const auto& tok = parsed.tokens[parsed.columns[i].token];
        edits.push_back({tok.begin, tok.end, {}});
      }
      if (edits.empty()) continue;
      const Column& col = schema.columns[static_cast<std::size_t>(link.column)];
      for (int other : schema.columns_of(col.table)) {
        const Column& oc = schema.columns[static_cast<std::size_t>(other)];
        if (other == link.column || oc.kind != col.kind) continue;
        SwapCandidate c;
        c.link = link;
        c.replacement = natural_name(oc.name);
        c.sql_text = oc.name;
        c.sql_edits = edits;
        for (auto& e : c.sql_edits) e.text = c.sql_text;
        c.provenance = SwapProvenance::same_table_column;
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

std::vector<GeneratedPair> synthesize(const TaskSample& sample, const Schema& schema, Executor& executor, int n_cfg,
                                      std::uint64_t seed) {
  if (!executor.has_database(schema.db_id)) throw DatabaseMissing("no database for " + schema.db_id);
  auto candidates = swap_candidates(sample, schema, executor, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  rng.shuffle(candidates);
  std::vector<GeneratedPair> out;
  std::set<std::string> seen{sample.sql};
  for (const auto& c : candidates) {
    if (static_cast<int>(out.size()) >= n_cfg) break;
    GeneratedPair p;
    p.question = apply_edits(sample.question, {{c.link.begin, c.link.end, c.replacement}});
    p.sql = apply_edits(sample.sql, c.sql_edits);
    if (!seen.insert(p.sql).second) continue;
    if (!executor.execute(schema.db_id, p.sql).ok()) continue;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<GeneratedPair> rephrase(std::vector<GeneratedPair> pairs, LlmProvider& provider) {
  for (auto& p : pairs) {
    try {
      const std::string prompt = render_prompt(PromptKind::rephrase, {{"question", p.question}});
      std::string reply = trim(provider.complete(ChatRequest::for_prompt(PromptKind::rephrase, prompt)));
      if (auto nl = reply.find('\n'); nl != std::string::npos) reply = trim(reply.substr(0, nl));
      if (!reply.empty()) p.question = reply;
    } catch (const std::exception& e) {
      spdlog::warn("rephrasing failed, keeping the original question: {}", e.what());
    }
  }
  return pairs;
}

std::vector<PseudoSample> run_synthesis_stage(ArtifactStore& store, const TaskStream& stream, int task_index,
                                              Executor& executor, LlmProvider* rephraser, int n_cfg,
                                              std::uint64_t seed) {
  if (task_index < 1 || task_index > static_cast<int>(stream.tasks.size()))
    throw std::out_of_range("task index outside the stream");
  const Task& task = stream.tasks[static_cast<std::size_t>(task_index - 1)];
  std::vector<PseudoSample> out;
  for (std::size_t i = 0; i < task.train.size(); ++i) {
    const auto& s = task.train[i];
    std::vector<GeneratedPair> pairs;
    try {
      pairs = synthesize(s, stream.schema(s.db_id), executor, n_cfg, seed + i);
    } catch (const sql::ParseError& e) {
      spdlog::warn("task {}: no variants for unparseable sample: {}", task.task_id, e.what());
      continue;
    }
    if (rephraser) pairs = rephrase(std::move(pairs), *rephraser);
    for (auto& p : pairs) {
      PseudoSample ps;
      ps.question = std::move(p.question);
      ps.sql = std::move(p.sql);
      ps.db_id = s.db_id;
      ps.provenance = "cfg";
      ps.status = SampleStatus::verified;
      ps.generation_index = static_cast<int>(out.size());
      out.push_back(std::move(ps));
    }
  }
  store.write_jsonl(task.task_id, kSynthStage, kCfgFile, to_records(out));
  return out;
}

}  // namespace csp

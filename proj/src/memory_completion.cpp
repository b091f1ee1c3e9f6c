#include "csp/memory_completion.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

namespace csp {

std::string to_string(SampleStatus status) {
  switch (status) {
    case SampleStatus::raw: return "raw";
    case SampleStatus::verified: return "verified";
    case SampleStatus::corrected: return "corrected";
    case SampleStatus::rejected: return "rejected";
  }
  return "raw";
}

SampleStatus sample_status_from_string(const std::string& s) {
  for (auto st : {SampleStatus::raw, SampleStatus::verified, SampleStatus::corrected, SampleStatus::rejected})
    if (to_string(st) == s) return st;
  throw std::invalid_argument("unknown sample status '" + s + "'");
}

json PseudoSample::to_json() const {
  json j{{"question", question},       {"sql", sql},     {"db_id", db_id},
         {"provenance", provenance},   {"status", to_string(status)},
         {"revisions", revisions},     {"llm_calls", llm_calls},
         {"generation_index", generation_index}};
  if (!source_skeleton.empty()) j["source_skeleton"] = source_skeleton;
  if (!cause.empty()) j["cause"] = cause;
  if (!detail.empty()) j["detail"] = detail;
  if (edit_distance) j["edit_distance"] = *edit_distance;
  return j;
}

PseudoSample PseudoSample::from_json(const json& j) {
  PseudoSample s;
  s.question = j.at("question").get<std::string>();
  s.sql = j.at("sql").get<std::string>();
  s.db_id = j.at("db_id").get<std::string>();
  s.provenance = j.value("provenance", std::string("ske"));
  s.status = sample_status_from_string(j.value("status", std::string("raw")));
  s.revisions = j.value("revisions", 0);
  s.llm_calls = j.value("llm_calls", 0);
  s.generation_index = j.value("generation_index", 0);
  s.source_skeleton = j.value("source_skeleton", std::string());
  s.cause = j.value("cause", std::string());
  s.detail = j.value("detail", std::string());
  if (j.contains("edit_distance")) s.edit_distance = j["edit_distance"].get<std::size_t>();
  return s;
}

void CompletionConfig::validate() const {
  if (n_ske < 1 || m_max < 1 || r_top < 1) throw std::invalid_argument("n_ske, m_max and r_top must be positive");
}

std::vector<SqlSkeleton> generation_targets(int task_index, const ComponentFeatureSet& current,
                                            const ComponentBias& bias) {
  return task_index == 1 ? current.skeletons : bias.skeletons;
}

std::vector<PseudoSample> generate_for_task(int task_index, const ComponentFeatureSet& current,
                                            const ComponentBias& bias, const std::vector<const Schema*>& schemas,
                                            LlmProvider& provider, const CompletionConfig& cfg, std::uint64_t seed,
                                            GenerationLog* log) {
  cfg.validate();
  if (schemas.empty()) throw std::invalid_argument("task has no schema to generate against");
  GenerationLog local;
  GenerationLog& lg = log ? *log : local;
  const auto targets = generation_targets(task_index, current, bias);
  std::vector<PseudoSample> out;
  if (targets.empty()) {
    lg.notices.push_back(task_index == 1 ? "empty feature set: nothing to generate"
                                         : "empty component bias: nothing to generate");
    return out;
  }

  std::size_t call = 0;
  int provider_failures = 0;
  std::string last_provider_error;
  for (const auto& z : targets) {
    const std::string simplified = simplify_skeleton(z);
    const PromptKind kind = z.nested ? PromptKind::generate_nested : PromptKind::generate;
    int ok = 0;
    for (int i = 0; i < cfg.n_ske; ++i, ++call) {
      const Schema& schema = *schemas[(seed + call) % schemas.size()];
      Slots slots{{"schema_block", render_schema_block(schema)},
                  {"sample_rows", render_sample_rows(schema)},
                  {"keywords", simplified}};
      if (z.nested) slots["nesting_hint"] = kNestingHint;
      ++lg.attempts[z.skeleton];
      try {
        const std::string reply = provider.complete(ChatRequest::for_prompt(kind, render_prompt(kind, slots)));
        const GeneratedPair pair = parse_pair(reply);
        PseudoSample s;
        s.question = pair.question;
        s.sql = pair.sql;
        s.db_id = schema.db_id;
        s.source_skeleton = z.skeleton;
        s.llm_calls = 1;
        s.generation_index = static_cast<int>(out.size());
        out.push_back(std::move(s));
        ++ok;
      } catch (const ProviderError& e) {
        ++provider_failures;
        last_provider_error = e.what();
        ++lg.failures[z.skeleton];
        spdlog::warn("generation for '{}' failed: {}", z.skeleton, e.what());
      } catch (const ResponseFormatError& e) {
        ++lg.failures[z.skeleton];
        spdlog::warn("unusable generation for '{}': {}", z.skeleton, e.what());
      }
    }
    if (ok == 0) lg.failed_skeletons.push_back(z.skeleton);
  }
  if (provider_failures > 0 && static_cast<std::size_t>(provider_failures) == call)
    throw ProviderError("every generation call failed; last error: " + last_provider_error);
  return out;
}

namespace {

Slots check_slots(const Schema& schema, const PseudoSample& s, const ExecOutcome& r) {
  return {{"schema_block", render_schema_block(schema)},
          {"question", s.question},
          {"sql", s.sql},
          {"execution_result", r.ok() ? format_rows(r.rows) : "(execution failed)"},
          {"error_message", r.ok() ? "none" : r.error_message}};
}

}  // namespace

PseudoSample self_correct_one(PseudoSample s, Executor& executor, const Schema& schema, LlmProvider& provider,
                              const CompletionConfig& cfg) {
  s.revisions = 0;
  s.llm_calls = 0;
  s.cause.clear();
  s.detail.clear();
  try {
    auto verify = [&](const ExecOutcome& r) {
      ++s.llm_calls;
      const std::string reply = provider.complete(
          ChatRequest::for_prompt(PromptKind::verify, render_prompt(PromptKind::verify, check_slots(schema, s, r))));
      const Verdict v = parse_verdict(reply);
      if (!v.correct) s.detail = "verdict: " + trim(reply).substr(0, 200);
      return v.correct;
    };

    ExecOutcome r = executor.execute(s.db_id, s.sql);
    if (r.ok() && verify(r)) {
      s.status = SampleStatus::verified;
      return s;
    }
    if (!r.ok()) s.detail = r.error_message;
    for (int round = 1; round <= cfg.m_max; ++round) {
      ++s.llm_calls;
      const std::string reply = provider.complete(
          ChatRequest::for_prompt(PromptKind::revise, render_prompt(PromptKind::revise, check_slots(schema, s, r))));
      s.revisions = round;
      try {
        s.sql = parse_sql_reply(reply);
      } catch (const ResponseFormatError& e) {
        spdlog::warn("unusable revision: {}", e.what());
      }
      r = executor.execute(s.db_id, s.sql);
      if (!r.ok()) {
        s.detail = r.error_message;
        continue;
      }
      if (verify(r)) {
        s.status = SampleStatus::corrected;
        s.detail.clear();
        return s;
      }
    }
    s.status = SampleStatus::rejected;
    s.cause = "not-verified";
  } catch (const ProviderError& e) {
    s.status = SampleStatus::rejected;
    s.cause = "provider-error";
    s.detail = e.what();
  } catch (const DatabaseMissing& e) {
    s.status = SampleStatus::rejected;
    s.cause = "missing-database";
    s.detail = e.what();
  }
  return s;
}

std::vector<PseudoSample> self_correct(std::vector<PseudoSample> samples, Executor& executor,
                                       const std::map<std::string, Schema>& schemas, LlmProvider& provider,
                                       const CompletionConfig& cfg) {
  cfg.validate();
  for (auto& s : samples) {
    auto it = schemas.find(s.db_id);
    if (it == schemas.end()) {
      s.status = SampleStatus::rejected;
      s.cause = "missing-database";
      s.detail = "unknown db_id " + s.db_id;
      continue;
    }
    s = self_correct_one(std::move(s), executor, it->second, provider, cfg);
  }
  return samples;
}

std::vector<PseudoSample> sample_by_skeleton(const std::vector<PseudoSample>& candidates, const CompletionConfig& cfg) {
  std::map<std::string, std::vector<PseudoSample>> groups;
  for (const auto& c : candidates) {
    if (!c.accepted()) continue;
    PseudoSample s = c;
    try {
      const SqlSkeleton source = extract_skeleton(c.source_skeleton);
      s.edit_distance = skeleton_edit_distance(extract_skeleton(c.sql), source);
    } catch (const sql::ParseError& e) {
      spdlog::warn("excluding candidate that does not parse: {} ({})", c.sql, e.what());
      continue;
    }
    groups[c.source_skeleton].push_back(std::move(s));
  }
  std::vector<PseudoSample> out;
  for (auto& [skel, group] : groups) {
    std::stable_sort(group.begin(), group.end(), [](const PseudoSample& a, const PseudoSample& b) {
      if (*a.edit_distance != *b.edit_distance) return *a.edit_distance < *b.edit_distance;
      return a.generation_index < b.generation_index;
    });
    const std::size_t keep = std::min(group.size(), static_cast<std::size_t>(cfg.r_top));
    out.insert(out.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

std::vector<json> to_records(const std::vector<PseudoSample>& samples) {
  std::vector<json> out;
  for (const auto& s : samples) out.push_back(s.to_json());
  return out;
}

std::vector<PseudoSample> from_records(const std::vector<json>& records) {
  std::vector<PseudoSample> out;
  for (const auto& r : records) out.push_back(PseudoSample::from_json(r));
  return out;
}

namespace {

const Task& task_at(const TaskStream& stream, int task_index) {
  if (task_index < 1 || task_index > static_cast<int>(stream.tasks.size()))
    throw std::out_of_range("task index " + std::to_string(task_index) + " outside the stream");
  return stream.tasks[static_cast<std::size_t>(task_index - 1)];
}

}  // namespace

std::vector<PseudoSample> run_generation_stage(ArtifactStore& store, const TaskStream& stream, int task_index,
                                               LlmProvider& provider, const CompletionConfig& cfg,
                                               std::uint64_t seed) {
  const Task& task = task_at(stream, task_index);
  const ComponentFeatureSet current = load_feature_set(store, task.task_id);
  const ComponentBias bias = task_index == 1 ? ComponentBias{task.task_id, {}} : load_bias(store, task.task_id);
  std::vector<const Schema*> schemas;
  for (const auto& db : task.db_ids) schemas.push_back(&stream.schema(db));

  GenerationLog log;
  auto raw = generate_for_task(task_index, current, bias, schemas, provider, cfg, seed, &log);
  for (const auto& n : log.notices) spdlog::info("task {}: {}", task.task_id, n);
  store.write_jsonl(task.task_id, kGenmemStage, kRawFile, to_records(raw));
  store.write_json(task.task_id, kGenmemStage, "log.json",
                   json{{"targets", generation_targets(task_index, current, bias).size()},
                        {"generated", raw.size()},
                        {"attempts", log.attempts},
                        {"failures", log.failures},
                        {"failed_skeletons", log.failed_skeletons},
                        {"notices", log.notices}});
  return raw;
}

CompletionResult run_calibration_stage(ArtifactStore& store, const TaskStream& stream, int task_index,
                                       Executor& executor, LlmProvider& provider, const CompletionConfig& cfg) {
  const Task& task = task_at(stream, task_index);
  CompletionResult res;
  res.raw = from_records(store.read_jsonl(task.task_id, kGenmemStage, kRawFile));
  const json genlog = store.exists(task.task_id, kGenmemStage, "log.json")
                          ? store.read_json(task.task_id, kGenmemStage, "log.json")
                          : json::object();
  res.checked = self_correct(res.raw, executor, stream.schemas, provider, cfg);
  res.selected = sample_by_skeleton(res.checked, cfg);

  std::vector<PseudoSample> quarantine;
  std::map<std::string, int> counts{{"raw", static_cast<int>(res.raw.size())}, {"verified", 0}, {"corrected", 0},
                                    {"rejected", 0}, {"selected", static_cast<int>(res.selected.size())}};
  std::map<std::string, int> causes;
  json per_skeleton = json::object();
  int max_calls = 0;
  for (const auto& s : res.checked) {
    ++counts[to_string(s.status)];
    max_calls = std::max(max_calls, s.llm_calls);
    auto& entry = per_skeleton[s.source_skeleton];
    if (entry.is_null()) entry = json{{"generated", 0}, {"accepted", 0}, {"selected", 0}};
    entry["generated"] = entry["generated"].get<int>() + 1;
    if (s.accepted()) entry["accepted"] = entry["accepted"].get<int>() + 1;
    if (s.status == SampleStatus::rejected) {
      ++causes[s.cause];
      quarantine.push_back(s);
    }
  }
  for (const auto& s : res.selected)
    per_skeleton[s.source_skeleton]["selected"] = per_skeleton[s.source_skeleton]["selected"].get<int>() + 1;

  res.report = json{{"task_id", task.task_id},
                    {"task_index", task_index},
                    {"counts", counts},
                    {"rejection_causes", causes},
                    {"per_skeleton", per_skeleton},
                    {"max_llm_calls_per_sample", max_calls},
                    {"notices", genlog.value("notices", json::array())},
                    {"failed_skeletons", genlog.value("failed_skeletons", json::array())}};
  store.write_jsonl(task.task_id, kCalibrateStage, kSelectedFile, to_records(res.selected));
  store.write_jsonl(task.task_id, kCalibrateStage, kQuarantineFile, to_records(quarantine));
  store.write_json(task.task_id, kCalibrateStage, kReportFile, res.report);
  return res;
}

CompletionResult complete_memory(ArtifactStore& store, const TaskStream& stream, int task_index,
                                 Executor& executor, LlmProvider& provider, const CompletionConfig& cfg,
                                 std::uint64_t seed) {
  run_generation_stage(store, stream, task_index, provider, cfg, seed);
  return run_calibration_stage(store, stream, task_index, executor, provider, cfg);
}

}  // namespace csp

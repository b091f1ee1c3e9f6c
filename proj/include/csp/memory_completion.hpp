#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csp/component_bias.hpp"
#include "csp/dataset_io.hpp"
#include "csp/llm_gateway.hpp"
#include "csp/sql_exec.hpp"

namespace csp {

enum class SampleStatus { raw, verified, corrected, rejected };

std::string to_string(SampleStatus status);
SampleStatus sample_status_from_string(const std::string& s);

struct PseudoSample {
  std::string question;
  std::string sql;
  std::string db_id;
  std::string source_skeleton;  // empty for entity-swap variants
  std::string provenance = "ske";  // "ske" or "cfg"
  SampleStatus status = SampleStatus::raw;
  int revisions = 0;  // corrected: revision rounds used
  std::string cause;   // rejected: provider-error, missing-database or not-verified
  std::string detail;  // rejected: last error or verdict text
  std::optional<std::size_t> edit_distance;
  int llm_calls = 0;
  int generation_index = 0;  // order of generation within the task

  json to_json() const;
  static PseudoSample from_json(const json& j);
  bool accepted() const { return status == SampleStatus::verified || status == SampleStatus::corrected; }
};

struct CompletionConfig {
  int n_ske = 10;
  int m_max = 3;
  int r_top = 3;
  void validate() const;
};

struct GenerationLog {
  std::vector<std::string> notices;
  std::map<std::string, int> attempts;   // per skeleton
  std::map<std::string, int> failures;   // per skeleton
  std::vector<std::string> failed_skeletons;  // every generation failed
};

/// Skeletons to fill for task_index (1-based): the whole feature set on the
/// first task, the component bias afterwards.
std::vector<SqlSkeleton> generation_targets(int task_index, const ComponentFeatureSet& current,
                                            const ComponentBias& bias);

/// n_ske generation calls per target skeleton, schemas taken round-robin
/// starting at seed % |schemas|. Failed calls are logged; ProviderError is
/// rethrown only when every call failed.
std::vector<PseudoSample> generate_for_task(int task_index, const ComponentFeatureSet& current,
                                            const ComponentBias& bias, const std::vector<const Schema*>& schemas,
                                            LlmProvider& provider, const CompletionConfig& cfg, std::uint64_t seed,
                                            GenerationLog* log = nullptr);

/// Execute, verify, then up to m_max revise/execute/verify rounds. Every
/// returned sample is verified, corrected or rejected.
PseudoSample self_correct_one(PseudoSample sample, Executor& executor, const Schema& schema, LlmProvider& provider,
                              const CompletionConfig& cfg);
std::vector<PseudoSample> self_correct(std::vector<PseudoSample> samples, Executor& executor,
                                       const std::map<std::string, Schema>& schemas, LlmProvider& provider,
                                       const CompletionConfig& cfg);

/// Per source skeleton: the r_top accepted candidates whose skeletons are
/// closest to the source, ties kept in generation order. Output is grouped
/// by skeleton (sorted), each group in ascending distance.
std::vector<PseudoSample> sample_by_skeleton(const std::vector<PseudoSample>& candidates, const CompletionConfig& cfg);

inline constexpr const char* kGenmemStage = "genmem";
inline constexpr const char* kCalibrateStage = "calibrate";
inline constexpr const char* kRawFile = "raw.jsonl";
inline constexpr const char* kSelectedFile = "x_ske.jsonl";
inline constexpr const char* kQuarantineFile = "quarantine.jsonl";
inline constexpr const char* kReportFile = "report.json";

std::vector<json> to_records(const std::vector<PseudoSample>& samples);
std::vector<PseudoSample> from_records(const std::vector<json>& records);

struct CompletionResult {
  std::vector<PseudoSample> raw;
  std::vector<PseudoSample> checked;
  std::vector<PseudoSample> selected;
  json report;
};

/// genmem stage: generation only, persisted as raw.jsonl plus a generation log.
std::vector<PseudoSample> run_generation_stage(ArtifactStore& store, const TaskStream& stream, int task_index,
                                               LlmProvider& provider, const CompletionConfig& cfg,
                                               std::uint64_t seed);
/// calibrate stage: reads raw.jsonl, writes x_ske.jsonl, quarantine.jsonl and report.json.
CompletionResult run_calibration_stage(ArtifactStore& store, const TaskStream& stream, int task_index,
                                       Executor& executor, LlmProvider& provider, const CompletionConfig& cfg);

/// Both stages in sequence.
CompletionResult complete_memory(ArtifactStore& store, const TaskStream& stream, int task_index,
                                 Executor& executor, LlmProvider& provider, const CompletionConfig& cfg,
                                 std::uint64_t seed);

}  // namespace csp

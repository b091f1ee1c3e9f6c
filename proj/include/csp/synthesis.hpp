#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csp/dataset_io.hpp"
#include "csp/llm_gateway.hpp"
#include "csp/memory_completion.hpp"
#include "csp/sql_exec.hpp"

namespace csp {

enum class SwapProvenance { same_column_value, same_table_column };
std::string to_string(SwapProvenance p);

struct TextEdit {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string text;
};

struct SwapCandidate {
  EntityLink link;          // question-side span being replaced
  std::string replacement;  // new question text
  std::string sql_text;     // new SQL token text (quoted literal or column name)
  std::vector<TextEdit> sql_edits;
  SwapProvenance provenance = SwapProvenance::same_column_value;
};

inline constexpr std::size_t kValuePoolCap = 20;

/// Value swaps draw from the distinct values of the linked column (at most
/// 20, seeded sample); column swaps use columns of the same table and kind.
/// Only links whose entity also occurs in the SQL qualify.
std::vector<SwapCandidate> swap_candidates(const TaskSample& sample, const Schema& schema, Executor& executor,
                                           std::uint64_t seed);

std::string apply_edits(std::string_view text, std::vector<TextEdit> edits);

/// Variants whose SQL executes, at most n_cfg, in seeded candidate order.
std::vector<GeneratedPair> synthesize(const TaskSample& sample, const Schema& schema, Executor& executor, int n_cfg,
                                      std::uint64_t seed);

/// Replaces each question with the provider's paraphrase, keeping the
/// original on any failure. SQL is never touched.
std::vector<GeneratedPair> rephrase(std::vector<GeneratedPair> pairs, LlmProvider& provider);

inline constexpr const char* kSynthStage = "synth";
inline constexpr const char* kCfgFile = "x_cfg.jsonl";

/// Synthesizes over the task's train split and writes x_cfg.jsonl.
std::vector<PseudoSample> run_synthesis_stage(ArtifactStore& store, const TaskStream& stream, int task_index,
                                              Executor& executor, LlmProvider* rephraser, int n_cfg,
                                              std::uint64_t seed);

}  // namespace csp

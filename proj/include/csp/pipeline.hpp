#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csp/cl_eval.hpp"
#include "csp/component_bias.hpp"
#include "csp/dataset_io.hpp"
#include "csp/distill.hpp"
#include "csp/llm_gateway.hpp"
#include "csp/memory_completion.hpp"
#include "csp/sql_exec.hpp"

namespace csp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stage failed; carries the stage name and task for diagnostics.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::string task_id, const std::string& message)
      : std::runtime_error("[" + stage + (task_id.empty() ? "" : " " + task_id) + "] " + message),
        stage_(std::move(stage)),
        task_id_(std::move(task_id)) {}
  const std::string& stage() const { return stage_; }
  const std::string& task_id() const { return task_id_; }

 private:
  std::string stage_;
  std::string task_id_;
};

struct RunConfig {
  std::filesystem::path stream_config;
  std::filesystem::path store_root;
  std::string provider = "mock";  // mock or remote
  std::filesystem::path mock_script;
  std::string embedder = "local";  // local or remote
  int k = 80;
  int n_ske = 10;
  int n_cfg = 3;
  int m_max = 3;
  int r_top = 3;
  double lambda = 0.1;
  std::uint64_t seed = 7;
  std::vector<int> permute;  // 1-based; empty keeps the configured order
  int epochs = 50;
  double learning_rate = 0.05;
  int dim = 16;
  bool rephrase = false;
  bool use_cfg = true;  // ablation switches
  bool use_ske = true;

  /// Throws ConfigError.
  void validate() const;
  /// Settings that change artifacts; paths are left out.
  json to_json() const;
};

inline constexpr const char* kEvalDir = "_eval";

/// Runs the stages of one stream against one artifact store. Every stage
/// reads its inputs from the store, so stages can run in separate processes.
class Pipeline {
 public:
  Pipeline(RunConfig cfg, std::unique_ptr<LlmProvider> llm, std::unique_ptr<EmbeddingProvider> embedder);

  const TaskStream& stream() const { return stream_; }
  ArtifactStore& store() { return store_; }
  int task_count() const { return static_cast<int>(stream_.tasks.size()); }
  const Vocabulary& vocabulary() const { return vocab_; }

  json analyze(int task_index);
  json genmem(int task_index);
  json calibrate(int task_index);
  json synth(int task_index);
  json train(int task_index);
  json assess(int task_index);
  json eval();

  /// Every stage of every task in order, skipping stages whose outputs are
  /// already in the store. Stops after task stop_after when given.
  json run(std::optional<int> stop_after = std::nullopt);

  bool stage_done(int task_index, const std::string& stage) const;
  ToyModel load_model(int task_index) const;
  std::vector<SeqItem> encode_split(const std::vector<TaskSample>& samples, Source source) const;

 private:
  const Task& task(int task_index) const;
  Executor& executor() { return executor_; }

  RunConfig cfg_;
  std::unique_ptr<LlmProvider> llm_;
  std::unique_ptr<EmbeddingProvider> embedder_;
  TaskStream stream_;
  ArtifactStore store_;
  Executor executor_;
  Vocabulary vocab_;
};

std::unique_ptr<LlmProvider> make_llm_provider(const RunConfig& cfg);
std::unique_ptr<EmbeddingProvider> make_embedder(const RunConfig& cfg);

}  // namespace csp

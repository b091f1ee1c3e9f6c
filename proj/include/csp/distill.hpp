#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csp/dataset_io.hpp"
#include "csp/schema.hpp"

namespace csp {

// ---- tokenization ----

/// Whitespace split; punctuation and operator runs become their own tokens;
/// quoted strings stay whole. Case is kept.
std::vector<std::string> tokenize_text(std::string_view text);
std::string detokenize(const std::vector<std::string>& tokens);

/// "table : col , col | table : col".
std::string serialize_schema(const Schema& schema);

class Vocabulary {
 public:
  static constexpr int kPad = 0, kBos = 1, kEos = 2, kUnk = 3, kSep = 4;

  Vocabulary();
  int add(const std::string& token);
  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::string serialize() const;  // one token per line
  static Vocabulary parse(const std::string& text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

/// Special tokens, placeholders, then every token of the stream's train
/// questions, SQL and schema serializations in first-seen order.
Vocabulary build_vocabulary(const TaskStream& stream);

inline constexpr std::size_t kMaxInputTokens = 512;
inline constexpr std::size_t kMaxTargetTokens = 256;

enum class Source { labeled, cfg, ske };
std::string to_string(Source s);

struct SeqItem {
  std::vector<int> input;
  std::vector<int> target;  // ends with EOS
  Source source = Source::labeled;
};

/// input = question <sep> schema (at most 512 ids); target = SQL + EOS (at most 256).
SeqItem encode(const Vocabulary& vocab, const std::string& question, const std::string& sql, const Schema& schema,
               Source source);

// ---- models ----

using Distributions = std::vector<std::vector<double>>;

class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual int vocab_size() const = 0;
  virtual std::vector<double>& params() = 0;
  virtual const std::vector<double>& params() const = 0;
  /// One distribution per target position under teacher forcing; position j
  /// conditions on target[0..j).
  virtual Distributions distributions(const std::vector<int>& input, const std::vector<int>& target) const = 0;
  /// Adds d(loss)/d(params) to grad given d(loss)/d(logits) per position.
  virtual void backward(const std::vector<int>& input, const std::vector<int>& target, const Distributions& dlogits,
                        std::vector<double>& grad) const = 0;
  virtual std::unique_ptr<SequenceModel> clone() const = 0;
};

/// Embeddings E (V x d), output W (V x d), bias b (V). The state at position
/// j is mean(E[input]) + E[previous target token] (BOS first); softmax(W h + b).
class ToyModel : public SequenceModel {
 public:
  ToyModel(int vocab_size, int dim, std::uint64_t seed, double scale = 0.1);
  ToyModel(int vocab_size, int dim, std::vector<double> params);

  int vocab_size() const override { return vocab_; }
  int dim() const { return dim_; }
  std::vector<double>& params() override { return theta_; }
  const std::vector<double>& params() const override { return theta_; }
  Distributions distributions(const std::vector<int>& input, const std::vector<int>& target) const override;
  void backward(const std::vector<int>& input, const std::vector<int>& target, const Distributions& dlogits,
                std::vector<double>& grad) const override;
  std::unique_ptr<SequenceModel> clone() const override { return std::make_unique<ToyModel>(*this); }

  /// Argmax decoding until EOS or max_len tokens.
  std::vector<int> greedy_decode(const std::vector<int>& input, std::size_t max_len = 64) const;

  json to_json() const;
  static ToyModel from_json(const json& j);

 private:
  std::vector<double> input_mean(const std::vector<int>& input) const;
  std::vector<double> logits(const std::vector<double>& h) const;

  int vocab_;
  int dim_;
  std::vector<double> theta_;
};

// ---- losses ----

struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// Mean over items of the summed per-token negative log-likelihood.
double ce_loss(const SequenceModel& model, const std::vector<SeqItem>& items);
LossGrad ce_loss_grad(const SequenceModel& model, const std::vector<SeqItem>& items);

/// (1/N) sum_i sum_j KL(P_j(teacher) || P_j(student)); gradients reach the student only.
double kl_loss(const SequenceModel& teacher, const SequenceModel& student, const std::vector<SeqItem>& items);
LossGrad kl_loss_grad(const SequenceModel& teacher, const SequenceModel& student, const std::vector<SeqItem>& items);

struct Batches {
  std::vector<SeqItem> labeled;
  std::vector<SeqItem> cfg;
  std::vector<SeqItem> ske;
};

struct LossComponents {
  double task = 0.0;
  double cur = 0.0;
  double past = 0.0;
  double kl = 0.0;
  bool kl_included = false;
};

/// task + cur + past (+ lambda * kl when included).
double combine(const LossComponents& c, double lambda);

/// Empty sources contribute 0; the KL term needs task_index > 1, a previous
/// model and ske items.
LossComponents loss_components(const SequenceModel& model, const SequenceModel* prev, const Batches& batches,
                               int task_index);
double total_loss(const SequenceModel& model, const SequenceModel* prev, const Batches& batches, double lambda,
                  int task_index);
LossGrad total_loss_grad(const SequenceModel& model, const SequenceModel* prev, const Batches& batches,
                         double lambda, int task_index);

/// Largest relative error between the analytic gradient and central
/// differences over `probes` random parameters.
double gradient_check(SequenceModel& model, const std::function<double(const SequenceModel&)>& loss,
                      const std::vector<double>& analytic, int probes, std::uint64_t seed, double step = 1e-5);

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 0.05;
  double lambda = 0.1;
  std::optional<std::filesystem::path> dump_on_divergence;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainLog {
  std::vector<double> total;  // loss before each epoch's update, then the final loss
};

/// Full-batch SGD on total_loss. prev is never modified.
TrainLog train_task(SequenceModel& student, const SequenceModel* prev, const Batches& batches, int task_index,
                    const TrainConfig& cfg);

}  // namespace csp

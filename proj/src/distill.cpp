#include "csp/distill.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>

namespace csp {

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_opchar = [](char c) { return c == '<' || c == '>' || c == '=' || c == '!'; };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '\'' || c == '"') {
      std::size_t j = i + 1;
      while (j < text.size()) {
        if (text[j] == c) {
          if (j + 1 < text.size() && text[j + 1] == c) {
            j += 2;
            continue;
          }
          break;
        }
        ++j;
      }
      if (j >= text.size()) {  // unterminated: the quote is punctuation
        out.emplace_back(1, c);
        ++i;
        continue;
      }
      out.emplace_back(text.substr(i, j + 1 - i));
      i = j + 1;
    } else if (is_word(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word(text[j])) ++j;
      const bool numeric = std::all_of(text.begin() + static_cast<std::ptrdiff_t>(i),
                                       text.begin() + static_cast<std::ptrdiff_t>(j),
                                       [](char x) { return std::isdigit(static_cast<unsigned char>(x)); });
      if (numeric && j + 1 < text.size() && text[j] == '.' && std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
        ++j;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (is_opchar(c)) {
      std::size_t j = i;
      while (j < text.size() && is_opchar(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (c == '[') {
      // placeholders such as [COL] stay whole
      const auto close = text.find(']', i);
      if (close != std::string_view::npos && close - i <= 6) {
        out.emplace_back(text.substr(i, close + 1 - i));
        i = close + 1;
      } else {
        out.emplace_back(1, c);
        ++i;
      }
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) { return join(tokens, " "); }

std::string serialize_schema(const Schema& schema) {
  std::vector<std::string> parts;
  for (std::size_t t = 0; t < schema.tables.size(); ++t) {
    std::vector<std::string> cols;
    for (int c : schema.columns_of(static_cast<int>(t))) cols.push_back(schema.columns[static_cast<std::size_t>(c)].name);
    parts.push_back(schema.tables[t] + " : " + join(cols, " , "));
  }
  return join(parts, " | ");
}

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>", "<sep>", "[COL]", "[TAB]", "[VAL]"}) add(t);
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

Vocabulary Vocabulary::parse(const std::string& text) {
  Vocabulary v;
  v.tokens_.clear();
  v.ids_.clear();
  for (const auto& line : split(text, '\n'))
    if (!line.empty()) v.add(line);
  if (v.size() < 5 || v.token(kEos) != "<eos>") throw std::runtime_error("malformed vocabulary file");
  return v;
}

Vocabulary build_vocabulary(const TaskStream& stream) {
  Vocabulary v;
  for (const auto& task : stream.tasks) {
    for (const auto& db : task.db_ids)
      for (const auto& t : tokenize_text(serialize_schema(stream.schema(db)))) v.add(t);
    for (const auto& s : task.train) {
      for (const auto& t : tokenize_text(s.question)) v.add(t);
      for (const auto& t : tokenize_text(s.sql)) v.add(t);
    }
  }
  return v;
}

std::string to_string(Source s) {
  switch (s) {
    case Source::labeled: return "labeled";
    case Source::cfg: return "cfg";
    case Source::ske: return "ske";
  }
  return "labeled";
}

SeqItem encode(const Vocabulary& vocab, const std::string& question, const std::string& sql, const Schema& schema,
               Source source) {
  SeqItem item;
  item.source = source;
  for (const auto& t : tokenize_text(question)) item.input.push_back(vocab.id(t));
  item.input.push_back(Vocabulary::kSep);
  for (const auto& t : tokenize_text(serialize_schema(schema))) item.input.push_back(vocab.id(t));
  if (item.input.size() > kMaxInputTokens) item.input.resize(kMaxInputTokens);
  for (const auto& t : tokenize_text(sql)) item.target.push_back(vocab.id(t));
  if (item.target.size() > kMaxTargetTokens - 1) item.target.resize(kMaxTargetTokens - 1);
  item.target.push_back(Vocabulary::kEos);
  return item;
}

// ---- toy model ----

ToyModel::ToyModel(int vocab_size, int dim, std::uint64_t seed, double scale) : vocab_(vocab_size), dim_(dim) {
  if (vocab_size < 1 || dim < 1) throw std::invalid_argument("vocab_size and dim must be positive");
  theta_.resize(static_cast<std::size_t>(2 * vocab_size * dim + vocab_size));
  Rng rng(seed);
  for (double& x : theta_) x = (2.0 * rng.uniform() - 1.0) * scale;
}

ToyModel::ToyModel(int vocab_size, int dim, std::vector<double> params)
    : vocab_(vocab_size), dim_(dim), theta_(std::move(params)) {
  if (theta_.size() != static_cast<std::size_t>(2 * vocab_size * dim + vocab_size))
    throw std::invalid_argument("parameter vector has the wrong size");
}

std::vector<double> ToyModel::input_mean(const std::vector<int>& input) const {
  std::vector<double> h(static_cast<std::size_t>(dim_), 0.0);
  if (input.empty()) return h;
  for (int t : input)
    for (int d = 0; d < dim_; ++d) h[static_cast<std::size_t>(d)] += theta_[static_cast<std::size_t>(t * dim_ + d)];
  for (double& x : h) x /= static_cast<double>(input.size());
  return h;
}

std::vector<double> ToyModel::logits(const std::vector<double>& h) const {
  const std::size_t w0 = static_cast<std::size_t>(vocab_ * dim_);
  const std::size_t b0 = 2 * w0;
  std::vector<double> z(static_cast<std::size_t>(vocab_));
  for (int v = 0; v < vocab_; ++v) {
    double s = theta_[b0 + static_cast<std::size_t>(v)];
    const double* w = &theta_[w0 + static_cast<std::size_t>(v * dim_)];
    for (int d = 0; d < dim_; ++d) s += w[d] * h[static_cast<std::size_t>(d)];
    z[static_cast<std::size_t>(v)] = s;
  }
  return z;
}

namespace {

void softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : z) x /= sum;
}

void check_ids(const std::vector<int>& ids, int vocab) {
  for (int t : ids)
    if (t < 0 || t >= vocab) throw std::out_of_range("token id " + std::to_string(t) + " outside the vocabulary");
}

}  // namespace

Distributions ToyModel::distributions(const std::vector<int>& input, const std::vector<int>& target) const {
  check_ids(input, vocab_);
  check_ids(target, vocab_);
  const auto base = input_mean(input);
  Distributions out;
  out.reserve(target.size());
  int prev = Vocabulary::kBos;
  for (int tok : target) {
    std::vector<double> h = base;
    for (int d = 0; d < dim_; ++d) h[static_cast<std::size_t>(d)] += theta_[static_cast<std::size_t>(prev * dim_ + d)];
    auto z = logits(h);
    softmax_inplace(z);
    out.push_back(std::move(z));
    prev = tok;
  }
  return out;
}

void ToyModel::backward(const std::vector<int>& input, const std::vector<int>& target, const Distributions& dlogits,
                        std::vector<double>& grad) const {
  const std::size_t w0 = static_cast<std::size_t>(vocab_ * dim_);
  const std::size_t b0 = 2 * w0;
  const auto base = input_mean(input);
  std::vector<double> dbase(static_cast<std::size_t>(dim_), 0.0);
  int prev = Vocabulary::kBos;
  for (std::size_t j = 0; j < target.size(); ++j) {
    std::vector<double> h = base;
    for (int d = 0; d < dim_; ++d) h[static_cast<std::size_t>(d)] += theta_[static_cast<std::size_t>(prev * dim_ + d)];
    std::vector<double> dh(static_cast<std::size_t>(dim_), 0.0);
    for (int v = 0; v < vocab_; ++v) {
      const double g = dlogits[j][static_cast<std::size_t>(v)];
      if (g == 0.0) continue;
      grad[b0 + static_cast<std::size_t>(v)] += g;
      const std::size_t row = w0 + static_cast<std::size_t>(v * dim_);
      for (int d = 0; d < dim_; ++d) {
        grad[row + static_cast<std::size_t>(d)] += g * h[static_cast<std::size_t>(d)];
        dh[static_cast<std::size_t>(d)] += g * theta_[row + static_cast<std::size_t>(d)];
      }
    }
    for (int d = 0; d < dim_; ++d) {
      grad[static_cast<std::size_t>(prev * dim_ + d)] += dh[static_cast<std::size_t>(d)];
      dbase[static_cast<std::size_t>(d)] += dh[static_cast<std::size_t>(d)];
    }
    prev = target[j];
  }
  if (input.empty()) return;
  const double inv = 1.0 / static_cast<double>(input.size());
  for (int t : input)
    for (int d = 0; d < dim_; ++d)
      grad[static_cast<std::size_t>(t * dim_ + d)] += dbase[static_cast<std::size_t>(d)] * inv;
}

std::vector<int> ToyModel::greedy_decode(const std::vector<int>& input, std::size_t max_len) const {
  check_ids(input, vocab_);
  const auto base = input_mean(input);
  std::vector<int> out;
  int prev = Vocabulary::kBos;
  while (out.size() < max_len) {
    std::vector<double> h = base;
    for (int d = 0; d < dim_; ++d) h[static_cast<std::size_t>(d)] += theta_[static_cast<std::size_t>(prev * dim_ + d)];
    const auto z = logits(h);
    const int next = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    prev = next;
  }
  return out;
}

json ToyModel::to_json() const { return json{{"vocab_size", vocab_}, {"dim", dim_}, {"params", theta_}}; }

ToyModel ToyModel::from_json(const json& j) {
  return ToyModel(j.at("vocab_size").get<int>(), j.at("dim").get<int>(), j.at("params").get<std::vector<double>>());
}

// ---- losses ----

namespace {

void require_items(const std::vector<SeqItem>& items) {
  if (items.empty()) throw std::invalid_argument("empty batch");
  for (const auto& it : items)
    if (it.input.empty() || it.target.empty()) throw std::invalid_argument("batch item with an empty sequence");
}

}  // namespace

double ce_loss(const SequenceModel& model, const std::vector<SeqItem>& items) {
  require_items(items);
  double total = 0.0;
  for (const auto& it : items) {
    const auto p = model.distributions(it.input, it.target);
    for (std::size_t j = 0; j < it.target.size(); ++j) total -= std::log(p[j][static_cast<std::size_t>(it.target[j])]);
  }
  return total / static_cast<double>(items.size());
}

LossGrad ce_loss_grad(const SequenceModel& model, const std::vector<SeqItem>& items) {
  require_items(items);
  LossGrad out;
  out.grad.assign(model.params().size(), 0.0);
  const double inv = 1.0 / static_cast<double>(items.size());
  for (const auto& it : items) {
    auto p = model.distributions(it.input, it.target);
    for (std::size_t j = 0; j < it.target.size(); ++j) {
      const auto t = static_cast<std::size_t>(it.target[j]);
      out.value -= std::log(p[j][t]);
      p[j][t] -= 1.0;
      for (double& x : p[j]) x *= inv;
    }
    model.backward(it.input, it.target, p, out.grad);
  }
  out.value *= inv;
  return out;
}

namespace {

double kl_term(const std::vector<double>& teacher, const std::vector<double>& student) {
  double s = 0.0;
  for (std::size_t v = 0; v < teacher.size(); ++v)
    if (teacher[v] > 0.0) s += teacher[v] * (std::log(teacher[v]) - std::log(student[v]));
  return s;
}

}  // namespace

double kl_loss(const SequenceModel& teacher, const SequenceModel& student, const std::vector<SeqItem>& items) {
  if (teacher.vocab_size() != student.vocab_size()) throw std::invalid_argument("vocabulary size mismatch");
  require_items(items);
  double total = 0.0;
  for (const auto& it : items) {
    const auto pt = teacher.distributions(it.input, it.target);
    const auto ps = student.distributions(it.input, it.target);
    for (std::size_t j = 0; j < it.target.size(); ++j) total += kl_term(pt[j], ps[j]);
  }
  return total / static_cast<double>(items.size());
}

LossGrad kl_loss_grad(const SequenceModel& teacher, const SequenceModel& student, const std::vector<SeqItem>& items) {
  if (teacher.vocab_size() != student.vocab_size()) throw std::invalid_argument("vocabulary size mismatch");
  require_items(items);
  LossGrad out;
  out.grad.assign(student.params().size(), 0.0);
  const double inv = 1.0 / static_cast<double>(items.size());
  for (const auto& it : items) {
    const auto pt = teacher.distributions(it.input, it.target);
    auto ps = student.distributions(it.input, it.target);
    for (std::size_t j = 0; j < it.target.size(); ++j) {
      out.value += kl_term(pt[j], ps[j]);
      for (std::size_t v = 0; v < ps[j].size(); ++v) ps[j][v] = (ps[j][v] - pt[j][v]) * inv;
    }
    student.backward(it.input, it.target, ps, out.grad);
  }
  out.value *= inv;
  return out;
}

double combine(const LossComponents& c, double lambda) {
  double total = c.task + c.cur + c.past;
  if (c.kl_included) total += lambda * c.kl;
  return total;
}

namespace {

bool kl_applies(const SequenceModel* prev, const Batches& b, int task_index) {
  return task_index > 1 && prev != nullptr && !b.ske.empty();
}

}  // namespace

LossComponents loss_components(const SequenceModel& model, const SequenceModel* prev, const Batches& batches,
                               int task_index) {
  LossComponents c;
  if (!batches.labeled.empty()) c.task = ce_loss(model, batches.labeled);
  if (!batches.cfg.empty()) c.cur = ce_loss(model, batches.cfg);
  if (!batches.ske.empty()) c.past = ce_loss(model, batches.ske);
  if (kl_applies(prev, batches, task_index)) {
    c.kl = kl_loss(*prev, model, batches.ske);
    c.kl_included = true;
  }
  return c;
}

double total_loss(const SequenceModel& model, const SequenceModel* prev, const Batches& batches, double lambda,
                  int task_index) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  return combine(loss_components(model, prev, batches, task_index), lambda);
}

LossGrad total_loss_grad(const SequenceModel& model, const SequenceModel* prev, const Batches& batches,
                         double lambda, int task_index) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  LossComponents c;
  LossGrad out;
  out.grad.assign(model.params().size(), 0.0);
  auto add = [&](const LossGrad& g, double w) {
    for (std::size_t i = 0; i < g.grad.size(); ++i) out.grad[i] += w * g.grad[i];
  };
  if (!batches.labeled.empty()) {
    auto g = ce_loss_grad(model, batches.labeled);
    c.task = g.value;
    add(g, 1.0);
  }
  if (!batches.cfg.empty()) {
    auto g = ce_loss_grad(model, batches.cfg);
    c.cur = g.value;
    add(g, 1.0);
  }
  if (!batches.ske.empty()) {
    auto g = ce_loss_grad(model, batches.ske);
    c.past = g.value;
    add(g, 1.0);
  }
  if (kl_applies(prev, batches, task_index)) {
    auto g = kl_loss_grad(*prev, model, batches.ske);
    c.kl = g.value;
    c.kl_included = true;
    add(g, lambda);
  }
  out.value = combine(c, lambda);
  return out;
}

double gradient_check(SequenceModel& model, const std::function<double(const SequenceModel&)>& loss,
                      const std::vector<double>& analytic, int probes, std::uint64_t seed, double step) {
  Rng rng(seed);
  auto& theta = model.params();
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    const std::size_t i = static_cast<std::size_t>(rng.below(theta.size()));
    const double saved = theta[i];
    theta[i] = saved + step;
    const double up = loss(model);
    theta[i] = saved - step;
    const double down = loss(model);
    theta[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-8});
    worst = std::max(worst, std::fabs(numeric - analytic[i]) / denom);
  }
  return worst;
}

TrainLog train_task(SequenceModel& student, const SequenceModel* prev, const Batches& batches, int task_index,
                    const TrainConfig& cfg) {
  if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  TrainLog log;
  auto& theta = student.params();
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    if (batches.labeled.empty() && batches.cfg.empty() && batches.ske.empty()) break;
    LossGrad g = total_loss_grad(student, prev, batches, cfg.lambda, task_index);
    bool finite = std::isfinite(g.value);
    for (double x : g.grad) finite = finite && std::isfinite(x);
    if (!finite) {
      if (cfg.dump_on_divergence)
        write_file_atomic(*cfg.dump_on_divergence,
                          json{{"epoch", epoch}, {"loss", std::isfinite(g.value) ? json(g.value) : json("non-finite")},
                               {"params", theta}}
                              .dump());
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
    }
    log.total.push_back(g.value);
    if (epoch == cfg.epochs) break;
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.learning_rate * g.grad[i];
  }
  return log;
}

}  // namespace csp

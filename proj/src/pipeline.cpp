#include "csp/pipeline.hpp"

#include <spdlog/spdlog.h>

#include "csp/synthesis.hpp"

namespace csp {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (stream_config.empty()) fail("--config is required");
  if (store_root.empty()) fail("--store is required");
  if (provider != "mock" && provider != "remote") fail("--provider must be mock or remote");
  if (provider == "mock" && mock_script.empty()) fail("--mock-script is required with the mock provider");
  if (embedder != "local" && embedder != "remote") fail("embedder must be local or remote");
  if (k < 1) fail("k must be >= 1");
  if (n_ske < 1 || n_cfg < 1 || m_max < 1 || r_top < 1) fail("n_ske, n_cfg, m_max and r_top must be >= 1");
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning rate must be > 0");
  if (dim < 1) fail("dim must be >= 1");
}

json RunConfig::to_json() const {
  return json{{"provider", provider}, {"embedder", embedder}, {"k", k},
              {"n_ske", n_ske},       {"n_cfg", n_cfg},       {"m_max", m_max},
              {"r_top", r_top},       {"lambda", lambda},     {"seed", seed},
              {"permute", permute},   {"epochs", epochs},     {"learning_rate", learning_rate},
              {"dim", dim},           {"rephrase", rephrase}, {"use_cfg", use_cfg},
              {"use_ske", use_ske}};
}

std::unique_ptr<LlmProvider> make_llm_provider(const RunConfig& cfg) {
  if (cfg.provider == "mock") {
    if (!fs::exists(cfg.mock_script)) throw ConfigError("mock script not found: " + cfg.mock_script.string());
    return std::make_unique<MockProvider>(MockProvider::parse_script(read_file(cfg.mock_script)));
  }
  return std::make_unique<RemoteProvider>(RemoteLlmConfig::from_env());
}

std::unique_ptr<EmbeddingProvider> make_embedder(const RunConfig& cfg) {
  if (cfg.embedder == "remote") return std::make_unique<RemoteEmbedder>(RemoteEmbedderConfig::from_env());
  return std::make_unique<LocalFeaturizer>();
}

namespace {

TaskStream load_stream(const RunConfig& cfg) {
  try {
    TaskStream s = load_task_stream(cfg.stream_config);
    if (!cfg.permute.empty()) s = permute_stream(s, cfg.permute);
    return s;
  } catch (const StreamError& e) {
    throw ConfigError(e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("--permute: ") + e.what());
  }
}

std::map<std::string, fs::path> database_map(const TaskStream& s) { return s.databases; }

}  // namespace

Pipeline::Pipeline(RunConfig cfg, std::unique_ptr<LlmProvider> llm, std::unique_ptr<EmbeddingProvider> embedder)
    : cfg_(std::move(cfg)),
      llm_(std::move(llm)),
      embedder_(std::move(embedder)),
      stream_((cfg_.validate(), load_stream(cfg_))),
      store_(cfg_.store_root),
      executor_(database_map(stream_)),
      vocab_(build_vocabulary(stream_)) {
  store_.set_task_order(stream_.task_ids());
  store_.set_guard_identifiers(stream_.all_identifiers());

  const fs::path settings = cfg_.store_root / "run_config.json";
  json mine = cfg_.to_json();
  mine["tasks"] = stream_.task_ids();
  if (fs::exists(settings)) {
    if (read_json_file(settings) != mine)
      throw ConfigError("store " + cfg_.store_root.string() + " was written with different settings");
  } else {
    write_file_atomic(settings, mine.dump(2) + "\n");
  }
  const fs::path vocab_file = cfg_.store_root / "vocab.txt";
  if (!fs::exists(vocab_file)) write_file_atomic(vocab_file, vocab_.serialize());
}

const Task& Pipeline::task(int task_index) const {
  if (task_index < 1 || task_index > task_count())
    throw ConfigError("task index " + std::to_string(task_index) + " outside 1.." + std::to_string(task_count()));
  return stream_.tasks[static_cast<std::size_t>(task_index - 1)];
}

namespace {

struct StageFile {
  const char* stage;
  const char* marker;
};

constexpr StageFile kStages[] = {{"analyze", "summary.json"}, {"genmem", "log.json"},   {"calibrate", "report.json"},
                                 {"synth", "x_cfg.jsonl"},     {"train", "model.json"}, {"assess", "row.json"}};

}  // namespace

bool Pipeline::stage_done(int task_index, const std::string& stage) const {
  for (const auto& s : kStages)
    if (stage == s.stage) return store_.exists(task(task_index).task_id, s.stage, s.marker);
  throw ConfigError("unknown stage '" + stage + "'");
}

json Pipeline::analyze(int t) {
  const Task& tk = task(t);
  const auto priors = load_feature_sets_before(store_, t);
  const FeatureSetTrace trace = extract_feature_set_traced(tk, stream_.schemas, *embedder_, cfg_.k, cfg_.seed);
  save_feature_set(store_, tk.task_id, trace.set);
  const ComponentBias bias = compute_bias(trace.set, priors);
  save_bias(store_, bias);
  json summary{{"stage", "analyze"},
               {"task_id", tk.task_id},
               {"task_index", t},
               {"samples", trace.pairs.size()},
               {"k_used", trace.set.k_used},
               {"feature_set_size", trace.set.skeletons.size()},
               {"bias_size", bias.skeletons.size()}};
  store_.write_json(tk.task_id, kAnalyzeStage, "summary.json", summary);
  return summary;
}

json Pipeline::genmem(int t) {
  const Task& tk = task(t);
  CompletionConfig cc{cfg_.n_ske, cfg_.m_max, cfg_.r_top};
  if (!store_.exists(tk.task_id, kAnalyzeStage, "summary.json"))
    throw MissingArtifact(tk.task_id, store_.path(tk.task_id, kAnalyzeStage, "summary.json"));
  const auto raw = run_generation_stage(store_, stream_, t, *llm_, cc, cfg_.seed);
  return json{{"stage", "genmem"}, {"task_id", tk.task_id}, {"task_index", t}, {"generated", raw.size()}};
}

json Pipeline::calibrate(int t) {
  const Task& tk = task(t);
  CompletionConfig cc{cfg_.n_ske, cfg_.m_max, cfg_.r_top};
  const auto res = run_calibration_stage(store_, stream_, t, executor_, *llm_, cc);
  json out = res.report;
  out["stage"] = "calibrate";
  out["task_id"] = tk.task_id;
  return out;
}

json Pipeline::synth(int t) {
  const Task& tk = task(t);
  const auto out =
      run_synthesis_stage(store_, stream_, t, executor_, cfg_.rephrase ? llm_.get() : nullptr, cfg_.n_cfg, cfg_.seed);
  return json{{"stage", "synth"}, {"task_id", tk.task_id}, {"task_index", t}, {"variants", out.size()}};
}

std::vector<SeqItem> Pipeline::encode_split(const std::vector<TaskSample>& samples, Source source) const {
  std::vector<SeqItem> out;
  for (const auto& s : samples) out.push_back(encode(vocab_, s.question, s.sql, stream_.schema(s.db_id), source));
  return out;
}

ToyModel Pipeline::load_model(int t) const {
  return ToyModel::from_json(json::parse(store_.read_text(task(t).task_id, "train", "model.json")));
}

json Pipeline::train(int t) {
  const Task& tk = task(t);
  Batches batches;
  batches.labeled = encode_split(tk.train, Source::labeled);
  auto encode_pseudo = [&](const std::vector<json>& records, Source source) {
    std::vector<SeqItem> out;
    for (const auto& s : from_records(records))
      out.push_back(encode(vocab_, s.question, s.sql, stream_.schema(s.db_id), source));
    return out;
  };
  if (cfg_.use_cfg) batches.cfg = encode_pseudo(store_.read_jsonl(tk.task_id, kSynthStage, kCfgFile), Source::cfg);
  if (cfg_.use_ske)
    batches.ske = encode_pseudo(store_.read_jsonl(tk.task_id, kCalibrateStage, kSelectedFile), Source::ske);

  std::optional<ToyModel> prev;
  if (t > 1) prev = load_model(t - 1);
  ToyModel student = prev ? *prev : ToyModel(vocab_.size(), cfg_.dim, cfg_.seed);
  const std::string teacher_hash = prev ? sha256_hex(prev->to_json().dump()) : "";

  TrainConfig tc;
  tc.epochs = cfg_.epochs;
  tc.learning_rate = cfg_.learning_rate;
  tc.lambda = cfg_.lambda;
  tc.dump_on_divergence = store_.path(tk.task_id, "train", "divergence.json");
  const TrainLog log = train_task(student, prev ? &*prev : nullptr, batches, t, tc);
  if (prev && sha256_hex(prev->to_json().dump()) != teacher_hash)
    throw std::logic_error("previous student changed during training");

  const LossComponents final_parts = loss_components(student, prev ? &*prev : nullptr, batches, t);
  json summary{{"stage", "train"},
               {"task_id", tk.task_id},
               {"task_index", t},
               {"items", {{"labeled", batches.labeled.size()}, {"cfg", batches.cfg.size()}, {"ske", batches.ske.size()}}},
               {"initial_loss", log.total.empty() ? json(nullptr) : json(log.total.front())},
               {"final_loss", log.total.empty() ? json(nullptr) : json(log.total.back())},
               {"final_components",
                {{"task", final_parts.task},
                 {"cur", final_parts.cur},
                 {"past", final_parts.past},
                 {"kl", final_parts.kl_included ? json(final_parts.kl) : json(nullptr)}}},
               {"losses", log.total}};
  store_.write_json(tk.task_id, "train", "log.json", summary);
  store_.write_text(tk.task_id, "train", "vocab.txt", vocab_.serialize());
  store_.write_text(tk.task_id, "train", "model.json", student.to_json().dump() + "\n");
  summary.erase("losses");
  return summary;
}

namespace {

struct SplitScore {
  int em = 0;
  int ex = 0;
  int n = 0;
  double ce = 0.0;
  std::vector<json> predictions;
};

}  // namespace

static SplitScore score_split(const ToyModel& model, const Vocabulary& vocab, const TaskStream& stream,
                              const Task& tk, Executor& executor, const std::vector<SeqItem>& items) {
  SplitScore s;
  s.n = static_cast<int>(tk.test.size());
  if (!items.empty()) s.ce = ce_loss(model, items);
  for (std::size_t i = 0; i < tk.test.size(); ++i) {
    const auto& sample = tk.test[i];
    std::vector<std::string> toks;
    for (int id : model.greedy_decode(items[i].input, kMaxTargetTokens)) toks.push_back(vocab.token(id));
    const std::string pred = detokenize(toks);
    const bool em = em_match(sample.sql, pred, stream.schema(sample.db_id));
    const bool ex = ex_match(sample.sql, pred, sample.db_id, executor);
    s.em += em;
    s.ex += ex;
    s.predictions.push_back(json{{"task_id", tk.task_id}, {"index", i},   {"gold", sample.sql},
                                 {"pred", pred},          {"db_id", sample.db_id}, {"em", em}, {"ex", ex}});
  }
  return s;
}

json Pipeline::assess(int t) {
  const Task& tk = task(t);
  const ToyModel model = load_model(t);
  json em = json::object(), ex = json::object(), ce = json::object();
  std::vector<json> predictions;
  int pooled_em = 0, pooled_ex = 0, pooled_n = 0;
  const int last = std::min(t + 1, task_count());
  for (int n = 1; n <= last; ++n) {
    const Task& other = task(n);
    const SplitScore s = score_split(model, vocab_, stream_, other, executor_, encode_split(other.test, Source::labeled));
    const std::string key = std::to_string(n);
    em[key] = static_cast<double>(s.em) / s.n;
    ex[key] = static_cast<double>(s.ex) / s.n;
    ce[key] = s.ce;
    if (n <= t) {
      pooled_em += s.em;
      pooled_ex += s.ex;
      pooled_n += s.n;
      predictions.insert(predictions.end(), s.predictions.begin(), s.predictions.end());
    }
  }
  json row{{"task_id", tk.task_id}, {"task_index", t}, {"em", em}, {"ex", ex}, {"test_ce", ce}};
  if (t == task_count()) {
    row["combined_em"] = static_cast<double>(pooled_em) / pooled_n;
    row["combined_ex"] = static_cast<double>(pooled_ex) / pooled_n;
  }
  store_.write_jsonl(tk.task_id, "assess", "predictions.jsonl", predictions);
  store_.write_json(tk.task_id, "assess", "row.json", row);
  json out = row;
  out["stage"] = "assess";
  return out;
}

json Pipeline::eval() {
  const int M = task_count();
  AccuracyMatrix em(MetricKind::em, M), ex(MetricKind::ex, M);
  const ToyModel reference(vocab_.size(), cfg_.dim, cfg_.seed);
  for (int n = 1; n <= M; ++n) {
    const Task& tk = task(n);
    const SplitScore s = score_split(reference, vocab_, stream_, tk, executor_, encode_split(tk.test, Source::labeled));
    em.set_reference(n, static_cast<double>(s.em) / s.n);
    ex.set_reference(n, static_cast<double>(s.ex) / s.n);
  }
  for (int m = 1; m <= M; ++m) {
    const json row = store_.read_json(task(m).task_id, "assess", "row.json");
    for (const auto& [key, v] : row.at("em").items()) em.set(m, std::stoi(key), v.get<double>());
    for (const auto& [key, v] : row.at("ex").items()) ex.set(m, std::stoi(key), v.get<double>());
    if (m == M) {
      em.combined = row.at("combined_em").get<double>();
      ex.combined = row.at("combined_ex").get<double>();
    }
  }
  const Metrics mem = metrics(em), mex = metrics(ex);
  auto pct = [](const Metrics& m) {
    return json{{"ACC_a", format_percent(m.acc_a)}, {"ACC_w", format_percent(m.acc_w)},
                {"BWT", format_percent(m.bwt)},     {"FWT", format_percent(m.fwt)}};
  };
  json summary{{"stage", "eval"},
               {"M", M},
               {"EM", metrics_json(mem)},
               {"EX", metrics_json(mex)},
               {"percent", {{"EM", pct(mem)}, {"EX", pct(mex)}}}};
  const fs::path dir = cfg_.store_root / kEvalDir;
  write_file_atomic(dir / "matrix_em.json", em.to_json().dump(2) + "\n");
  write_file_atomic(dir / "matrix_ex.json", ex.to_json().dump(2) + "\n");
  write_file_atomic(dir / "metrics.json", summary.dump(2) + "\n");
  write_file_atomic(dir / "report.md", markdown_report(em, ex, stream_.task_ids()));
  return summary;
}

json Pipeline::run(std::optional<int> stop_after) {
  json stages = json::array();
  for (int t = 1; t <= task_count(); ++t) {
    const std::string& id = task(t).task_id;
    for (const auto& s : kStages) {
      const std::string stage = s.stage;
      if (!cfg_.use_ske && (stage == "genmem" || stage == "calibrate")) continue;
      if (!cfg_.use_cfg && stage == "synth") continue;
      if (stage_done(t, stage)) {
        spdlog::info("task {}: {} already done, reusing", id, stage);
        continue;
      }
      spdlog::info("task {}: {}", id, stage);
      json summary;
      try {
        if (stage == "analyze") summary = analyze(t);
        else if (stage == "genmem") summary = genmem(t);
        else if (stage == "calibrate") summary = calibrate(t);
        else if (stage == "synth") summary = synth(t);
        else if (stage == "train") summary = train(t);
        else summary = assess(t);
      } catch (const ProviderError&) {
        throw;
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError(stage, id, e.what());
      }
      stages.push_back(summary);
    }
    if (stop_after && t >= *stop_after) return json{{"stopped_after", t}, {"stages", stages}};
  }
  json summary;
  try {
    summary = eval();
  } catch (const std::exception& e) {
    throw StageError("eval", "", e.what());
  }
  return json{{"stages", stages}, {"eval", summary}};
}

}  // namespace csp

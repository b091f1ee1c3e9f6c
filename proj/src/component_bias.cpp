#include "csp/component_bias.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace csp {

Vector LocalFeaturizer::embed(const std::string& text) {
  Vector v(kDimension, 0.0);
  if (text.size() < 3) {
    v[fnv1a64(text) % kDimension] = 1.0;
    return v;
  }
  for (std::size_t i = 0; i + 3 <= text.size(); ++i) v[fnv1a64(std::string_view(text).substr(i, 3)) % kDimension] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

RemoteEmbedderConfig RemoteEmbedderConfig::from_env() {
  RemoteEmbedderConfig cfg;
  cfg.base_url = env_or("EMBED_API_BASE", "");
  cfg.api_key = env_or("EMBED_API_KEY", "");
  cfg.model = env_or("EMBED_MODEL", cfg.model);
  return cfg;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig cfg) : cfg_(std::move(cfg)), dimension_(cfg_.dimension) {
  if (cfg_.base_url.empty()) throw ProviderError("EMBED_API_BASE is not set");
}

int RemoteEmbedder::dimension() const {
  std::lock_guard lock(mu_);
  return dimension_;
}

std::vector<Vector> parse_embeddings_response(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    throw ProviderError("malformed embeddings response");
  }
  if (!doc.contains("data") || !doc["data"].is_array()) throw ProviderError("embeddings response without data");
  std::vector<Vector> out;
  for (const auto& item : doc["data"]) {
    const auto& e = item.at("embedding");
    if (!e.is_array() || e.empty()) throw ProviderError("empty embedding in response");
    if (e[0].is_array()) {
      Vector pooled(e[0].size(), 0.0);
      for (const auto& tok : e) {
        if (tok.size() != pooled.size()) throw ProviderError("ragged token embeddings");
        for (std::size_t d = 0; d < pooled.size(); ++d) pooled[d] += tok[d].get<double>();
      }
      for (double& x : pooled) x /= static_cast<double>(e.size());
      out.push_back(std::move(pooled));
    } else {
      out.push_back(e.get<Vector>());
    }
  }
  return out;
}

Vector RemoteEmbedder::embed(const std::string& text) {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(text); it != cache_.end()) return it->second;
  }
  const std::string body = json{{"model", cfg_.model}, {"input", json::array({text})}}.dump();
  HttpReply reply = post_with_retries(
      cfg_.retry, [&] { return http_post_json(cfg_.base_url, "/embeddings", cfg_.api_key, body, cfg_.timeout); },
      "embeddings");
  auto vecs = parse_embeddings_response(reply.body);
  if (vecs.size() != 1) throw ProviderError("embeddings response has " + std::to_string(vecs.size()) + " items");
  Vector v = std::move(vecs.front());
  for (double x : v)
    if (!std::isfinite(x)) throw ProviderError("non-finite embedding component");
  std::lock_guard lock(mu_);
  if (dimension_ == 0) dimension_ = static_cast<int>(v.size());
  if (static_cast<int>(v.size()) != dimension_)
    throw ProviderError("embedding dimension mismatch: expected " + std::to_string(dimension_) + ", got " +
                        std::to_string(v.size()));
  cache_.emplace(text, v);
  return v;
}

std::string embedding_text(const DedomainedPair& pair) { return pair.q_de + " | " + pair.z.skeleton; }

Vector embed(EmbeddingProvider& provider, const DedomainedPair& pair) { return provider.embed(embedding_text(pair)); }

double squared_distance(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace {

std::size_t nearest(const Vector& p, const std::vector<Vector>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

KMeansResult kmeans(const std::vector<Vector>& points, int k, std::uint64_t seed) {
  if (points.empty()) throw std::invalid_argument("kmeans: no points");
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  const std::size_t dim = points.front().size();
  if (dim == 0) throw std::invalid_argument("kmeans: zero-dimensional points");
  for (const auto& p : points)
    if (p.size() != dim) throw std::invalid_argument("kmeans: inconsistent point dimensions");

  const std::size_t distinct = std::set<Vector>(points.begin(), points.end()).size();
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), distinct);
  const std::size_t n = points.size();

  Rng rng(seed);
  KMeansResult r;
  r.centroids.push_back(points[rng.below(n)]);
  std::vector<double> d2(n);
  while (r.centroids.size() < kk) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = squared_distance(points[i], r.centroids[nearest(points[i], r.centroids)]);
      total += d2[i];
    }
    double target = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      if (target < d2[i]) break;
      target -= d2[i];
    }
    r.centroids.push_back(points[pick]);
  }

  r.assignments.assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r.assignments[i] = static_cast<int>(nearest(points[i], r.centroids));
      sse += squared_distance(points[i], r.centroids[static_cast<std::size_t>(r.assignments[i])]);
    }
    r.objective.push_back(sse);
    r.iterations = iter + 1;

    std::vector<Vector> sums(kk, Vector(dim, 0.0));
    std::vector<std::size_t> counts(kk, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = static_cast<std::size_t>(r.assignments[i]);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < kk; ++c) {
      if (counts[c] == 0) continue;  // an empty cluster keeps its centre
      for (double& x : sums[c]) x /= static_cast<double>(counts[c]);
      shift = std::max(shift, std::sqrt(squared_distance(sums[c], r.centroids[c])));
      r.centroids[c] = std::move(sums[c]);
    }
    if (shift < 1e-6) break;
  }
  return r;
}

FeatureSetTrace extract_feature_set_traced(const Task& task, const std::map<std::string, Schema>& schemas,
                                           EmbeddingProvider& provider, int k, std::uint64_t seed) {
  if (task.train.empty()) throw std::invalid_argument("task '" + task.task_id + "' has no training samples");
  FeatureSetTrace trace;
  std::size_t failures = 0;
  for (const auto& s : task.train) {
    auto it = schemas.find(s.db_id);
    if (it == schemas.end()) throw std::out_of_range("unknown db_id: " + s.db_id);
    try {
      trace.pairs.push_back(dedomain(s.question, s.sql, it->second));
    } catch (const sql::ParseError& e) {
      ++failures;
      spdlog::warn("task {}: skipping sample that does not parse: {}", task.task_id, e.what());
    }
  }
  if (trace.pairs.empty())
    throw std::runtime_error("task '" + task.task_id + "': no training sample could be de-domained");

  for (const auto& p : trace.pairs) trace.points.push_back(embed(provider, p));
  trace.clusters = kmeans(trace.points, k, seed);

  trace.set.task_id = task.task_id;
  trace.set.k_used = static_cast<int>(trace.clusters.centroids.size());
  for (const auto& c : trace.clusters.centroids) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trace.points.size(); ++i) {
      const double d = squared_distance(trace.points[i], c);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    trace.chosen.push_back(best);
    trace.set.skeletons.push_back(trace.pairs[best].z);
  }
  trace.set.normalize();
  return trace;
}

ComponentFeatureSet extract_feature_set(const Task& task, const std::map<std::string, Schema>& schemas,
                                        EmbeddingProvider& provider, int k, std::uint64_t seed) {
  return extract_feature_set_traced(task, schemas, provider, k, seed).set;
}

ComponentBias compute_bias(const ComponentFeatureSet& current, const std::vector<ComponentFeatureSet>& priors) {
  std::set<std::string> mine;
  for (const auto& z : current.skeletons) mine.insert(z.skeleton);
  std::map<std::string, SqlSkeleton> out;
  for (const auto& prior : priors)
    for (const auto& z : prior.skeletons)
      if (!mine.count(z.skeleton)) out.emplace(z.skeleton, z);
  ComponentBias bias;
  bias.task_id = current.task_id;
  for (auto& [s, z] : out) bias.skeletons.push_back(z);
  return bias;
}

void save_bias(ArtifactStore& store, const ComponentBias& bias) {
  std::vector<json> records;
  for (const auto& z : bias.skeletons) records.push_back(feature_set_record(z));
  store.write_text(bias.task_id, kAnalyzeStage, kBiasFile, to_jsonl(records));
}

ComponentBias load_bias(const ArtifactStore& store, const std::string& task_id) {
  ComponentBias bias;
  bias.task_id = task_id;
  for (const auto& rec : store.read_jsonl(task_id, kAnalyzeStage, kBiasFile))
    bias.skeletons.push_back(extract_skeleton(rec.at("skeleton").get<std::string>()));
  std::sort(bias.skeletons.begin(), bias.skeletons.end());
  return bias;
}

}  // namespace csp

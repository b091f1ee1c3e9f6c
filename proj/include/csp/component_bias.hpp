#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "csp/dataset_io.hpp"
#include "csp/http.hpp"
#include "csp/skeletonizer.hpp"

namespace csp {

using Vector = std::vector<double>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string mode() const = 0;
  virtual int dimension() const = 0;
  virtual Vector embed(const std::string& text) = 0;
};

/// Hashed character 3-gram counts, L2-normalized.
class LocalFeaturizer : public EmbeddingProvider {
 public:
  static constexpr int kDimension = 256;
  std::string mode() const override { return "local-featurizer"; }
  int dimension() const override { return kDimension; }
  Vector embed(const std::string& text) override;
};

struct RemoteEmbedderConfig {
  std::string base_url;  // EMBED_API_BASE
  std::string api_key;   // EMBED_API_KEY
  std::string model = "codet5-base";
  int dimension = 0;  // 0: take it from the first response
  RetryPolicy retry;
  std::chrono::seconds timeout{60};

  static RemoteEmbedderConfig from_env();
};

/// Posts to an embeddings endpoint. Token-level answers are mean-pooled.
/// Vectors are cached per text so repeated inputs agree within a run.
class RemoteEmbedder : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig cfg);
  std::string mode() const override { return "remote-endpoint"; }
  int dimension() const override;
  Vector embed(const std::string& text) override;

 private:
  RemoteEmbedderConfig cfg_;
  mutable std::mutex mu_;
  int dimension_ = 0;
  std::map<std::string, Vector> cache_;
};

/// Parses an embeddings response body into one pooled vector per input.
std::vector<Vector> parse_embeddings_response(const std::string& body);

/// The text a de-domained pair is embedded as.
std::string embedding_text(const DedomainedPair& pair);
Vector embed(EmbeddingProvider& provider, const DedomainedPair& pair);

struct KMeansResult {
  std::vector<int> assignments;
  std::vector<Vector> centroids;
  /// Within-cluster sum of squares after each assignment step.
  std::vector<double> objective;
  int iterations = 0;
};

double squared_distance(const Vector& a, const Vector& b);

/// Lloyd's algorithm with k-means++ seeding. Effective k is min(k, distinct points).
KMeansResult kmeans(const std::vector<Vector>& points, int k, std::uint64_t seed);

struct FeatureSetTrace {
  ComponentFeatureSet set;
  std::vector<DedomainedPair> pairs;  // samples that de-domained, in train order
  std::vector<Vector> points;
  KMeansResult clusters;
  std::vector<std::size_t> chosen;  // index into pairs per centroid
};

FeatureSetTrace extract_feature_set_traced(const Task& task, const std::map<std::string, Schema>& schemas,
                                           EmbeddingProvider& provider, int k, std::uint64_t seed);
ComponentFeatureSet extract_feature_set(const Task& task, const std::map<std::string, Schema>& schemas,
                                        EmbeddingProvider& provider, int k, std::uint64_t seed);

struct ComponentBias {
  std::string task_id;
  std::vector<SqlSkeleton> skeletons;  // sorted, unique
};

/// Skeletons in any prior set but not in the current one.
ComponentBias compute_bias(const ComponentFeatureSet& current, const std::vector<ComponentFeatureSet>& priors);

inline constexpr const char* kBiasFile = "bias.jsonl";
void save_bias(ArtifactStore& store, const ComponentBias& bias);
ComponentBias load_bias(const ArtifactStore& store, const std::string& task_id);

}  // namespace csp

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "csp/schema.hpp"
#include "csp/skeletonizer.hpp"
#include "csp/util.hpp"

namespace csp {

enum class Split { train, dev, test };
std::string to_string(Split split);

struct TaskSample {
  std::string question;
  std::string sql;
  std::string db_id;
  Split split = Split::train;
};

struct Task {
  std::string task_id;
  std::vector<TaskSample> train;
  std::vector<TaskSample> dev;
  std::vector<TaskSample> test;
  std::vector<std::string> db_ids;  // sorted
};

enum class OrderLabel { warm_start, cold_start, custom };
std::string to_string(OrderLabel label);

struct TaskStream {
  std::vector<Task> tasks;
  OrderLabel order_label = OrderLabel::custom;
  std::map<std::string, Schema> schemas;
  std::map<std::string, std::filesystem::path> databases;

  const Schema& schema(const std::string& db_id) const;
  std::vector<std::string> task_ids() const;
  /// Identifiers of every loaded schema.
  std::vector<std::string> all_identifiers() const;
};

/// Every validation problem found in a stream, sorted, so the reported set
/// does not depend on task order.
class StreamError : public std::runtime_error {
 public:
  explicit StreamError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

/// Reads a tables.json-style schema file. Sample rows are filled from the
/// database when db_dir is given and the file exists.
std::vector<Schema> load_schemas(const std::filesystem::path& tables_json,
                                 const std::filesystem::path& db_dir = {});

/// First row per table ordered by rowid; empty rows for missing or empty tables.
std::vector<std::vector<std::string>> read_sample_rows(const Schema& schema, const std::filesystem::path& db_file);

std::filesystem::path database_file(const std::filesystem::path& db_dir, const std::string& db_id);

/// Config: {"order_label"?, "tables_path"?, "tasks": [{task_id, train_path,
/// dev_path, test_path, db_dir, tables_path?}]}. Relative paths resolve
/// against the config's directory. Throws StreamError.
TaskStream load_task_stream(const std::filesystem::path& config_path);

/// Validates an assembled stream (disjointness, non-empty splits, resolvable
/// and parseable samples). Throws StreamError.
void validate_stream(const TaskStream& stream);

/// Reorders tasks by a 1-based permutation.
TaskStream permute_stream(const TaskStream& stream, const std::vector<int>& order);

/// Per-task skeleton set nearest to the cluster centres; the only state kept across tasks.
struct ComponentFeatureSet {
  std::string task_id;
  std::vector<SqlSkeleton> skeletons;  // sorted by canonical string, unique
  int k_used = 0;

  /// Sorts and deduplicates.
  void normalize();
  bool contains(const std::string& skeleton) const;
  friend bool operator==(const ComponentFeatureSet& a, const ComponentFeatureSet& b) {
    return a.task_id == b.task_id && a.skeletons == b.skeletons && a.k_used == b.k_used;
  }
};

class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(std::string task_id, const std::filesystem::path& path);
  const std::string& task_id() const { return task_id_; }

 private:
  std::string task_id_;
};

class LeakageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic timestamp source; SOURCE_DATE_EPOCH when set, else the epoch.
std::string reproducible_timestamp();
std::string wall_clock_timestamp();

/// Artifacts live at root/<task_id>/<stage>/<name>.
class ArtifactStore {
 public:
  using Clock = std::function<std::string()>;

  explicit ArtifactStore(std::filesystem::path root, Clock clock = reproducible_timestamp);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path(const std::string& task_id, const std::string& stage, const std::string& name) const;
  bool exists(const std::string& task_id, const std::string& stage, const std::string& name) const;

  /// Overwrites with a warning when the file already exists.
  void write_text(const std::string& task_id, const std::string& stage, const std::string& name,
                  const std::string& contents);
  /// Throws MissingArtifact.
  std::string read_text(const std::string& task_id, const std::string& stage, const std::string& name) const;

  void write_json(const std::string& task_id, const std::string& stage, const std::string& name, const json& value);
  json read_json(const std::string& task_id, const std::string& stage, const std::string& name) const;
  void write_jsonl(const std::string& task_id, const std::string& stage, const std::string& name,
                   const std::vector<json>& records);
  std::vector<json> read_jsonl(const std::string& task_id, const std::string& stage, const std::string& name) const;

  /// Stream order used to map task indices to task ids.
  void set_task_order(std::vector<std::string> order) { task_order_ = std::move(order); }
  const std::vector<std::string>& task_order() const { return task_order_; }

  /// Identifiers that must never appear in cross-task state.
  void set_guard_identifiers(std::vector<std::string> ids) { guard_ = std::move(ids); }
  const std::vector<std::string>& guard_identifiers() const { return guard_; }

  std::string now() const { return clock_(); }

 private:
  std::filesystem::path root_;
  Clock clock_;
  std::vector<std::string> task_order_;
  std::vector<std::string> guard_;
};

inline constexpr const char* kAnalyzeStage = "analyze";
inline constexpr const char* kFeatureSetFile = "feature_set.jsonl";
inline constexpr const char* kFeatureSetMetaFile = "feature_set.meta.json";

json feature_set_record(const SqlSkeleton& z);
std::string serialize_feature_set(const ComponentFeatureSet& set);
ComponentFeatureSet parse_feature_set(const std::string& task_id, const std::string& jsonl, int k_used);

/// Throws LeakageError when a skeleton is not a canonical skeleton or names a
/// guarded identifier.
void save_feature_set(ArtifactStore& store, const std::string& task_id, const ComponentFeatureSet& set);
ComponentFeatureSet load_feature_set(const ArtifactStore& store, const std::string& task_id);

/// Feature sets of tasks 1..task_index-1 (1-based) in stream order.
std::vector<ComponentFeatureSet> load_feature_sets_before(const ArtifactStore& store, int task_index);

struct ReplayHit {
  std::filesystem::path file;
  std::string match;
};

/// Scans every stored feature set for schema identifiers, cell values and
/// question strings from the stream.
std::vector<ReplayHit> scan_cross_task_state(const ArtifactStore& store, const TaskStream& stream);

}  // namespace csp

#include "csp/dataset_io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <set>

#include "csp/sql_exec.hpp"

namespace csp {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

std::string to_string(OrderLabel label) {
  switch (label) {
    case OrderLabel::warm_start: return "warm_start";
    case OrderLabel::cold_start: return "cold_start";
    case OrderLabel::custom: return "custom";
  }
  return "custom";
}

namespace {

OrderLabel order_label_from(const std::string& s) {
  if (s == "warm_start") return OrderLabel::warm_start;
  if (s == "cold_start") return OrderLabel::cold_start;
  if (s == "custom") return OrderLabel::custom;
  throw StreamError({"unknown order_label '" + s + "'"});
}

std::string quote_ident(const std::string& name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

const Schema& TaskStream::schema(const std::string& db_id) const {
  auto it = schemas.find(db_id);
  if (it == schemas.end()) throw std::out_of_range("unknown db_id: " + db_id);
  return it->second;
}

std::vector<std::string> TaskStream::task_ids() const {
  std::vector<std::string> ids;
  for (const auto& t : tasks) ids.push_back(t.task_id);
  return ids;
}

std::vector<std::string> TaskStream::all_identifiers() const {
  std::set<std::string> ids;
  for (const auto& [db, s] : schemas)
    for (auto& id : s.identifiers()) ids.insert(id);
  return {ids.begin(), ids.end()};
}

StreamError::StreamError(std::vector<std::string> issues)
    : std::runtime_error([&] {
        std::sort(issues.begin(), issues.end());
        issues.erase(std::unique(issues.begin(), issues.end()), issues.end());
        return "invalid task stream: " + join(issues, "; ");
      }()),
      issues_(std::move(issues)) {
  std::sort(issues_.begin(), issues_.end());
  issues_.erase(std::unique(issues_.begin(), issues_.end()), issues_.end());
}

fs::path database_file(const fs::path& db_dir, const std::string& db_id) { return db_dir / db_id / (db_id + ".sqlite"); }

std::vector<std::vector<std::string>> read_sample_rows(const Schema& schema, const fs::path& db_file) {
  std::vector<std::vector<std::string>> rows(schema.tables.size());
  Connection conn(db_file);
  for (std::size_t t = 0; t < schema.tables.size(); ++t) {
    const auto cols = schema.columns_of(static_cast<int>(t));
    if (cols.empty()) continue;
    std::vector<std::string> names;
    for (int c : cols) names.push_back(quote_ident(schema.columns[static_cast<std::size_t>(c)].name));
    const std::string select = "SELECT " + join(names, ", ") + " FROM " + quote_ident(schema.tables[t]);
    auto outcome = conn.run(select + " ORDER BY rowid LIMIT 1", std::chrono::milliseconds(2000), 1);
    if (!outcome.ok()) outcome = conn.run(select + " LIMIT 1", std::chrono::milliseconds(2000), 1);
    if (!outcome.ok() || outcome.rows.empty()) continue;
    for (const auto& v : outcome.rows.front()) rows[t].push_back(format_value(v));
  }
  return rows;
}

std::vector<Schema> load_schemas(const fs::path& tables_json, const fs::path& db_dir) {
  const json doc = read_json_file(tables_json);
  if (!doc.is_array()) throw StreamError({"tables file is not a JSON array: " + tables_json.string()});
  std::vector<Schema> out;
  for (const auto& entry : doc) {
    Schema s;
    s.db_id = entry.at("db_id").get<std::string>();
    s.tables = entry.at("table_names_original").get<std::vector<std::string>>();
    const auto& cols = entry.at("column_names_original");
    std::vector<std::string> types;
    if (entry.contains("column_types")) types = entry.at("column_types").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const int table = cols[i].at(0).get<int>();
      if (table < 0) continue;  // the "*" pseudo-column
      Column c;
      c.table = table;
      c.name = cols[i].at(1).get<std::string>();
      c.kind = i < types.size() ? value_kind_from_string(types[i]) : ValueKind::other;
      s.columns.push_back(std::move(c));
    }
    if (!db_dir.empty()) {
      const fs::path file = database_file(db_dir, s.db_id);
      if (fs::exists(file)) s.sample_rows = read_sample_rows(s, file);
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::vector<TaskSample> load_samples(const fs::path& path, Split split, std::vector<std::string>& issues) {
  std::vector<TaskSample> out;
  if (!fs::exists(path)) {
    issues.push_back("missing file: " + path.filename().string());
    return out;
  }
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    issues.push_back("malformed JSON in " + path.filename().string());
    return out;
  }
  if (!doc.is_array()) {
    issues.push_back("sample file is not a JSON array: " + path.filename().string());
    return out;
  }
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("question") || !item.contains("query") || !item.contains("db_id")) {
      issues.push_back("sample without question/query/db_id in " + path.filename().string());
      continue;
    }
    TaskSample s;
    s.question = item["question"].get<std::string>();
    s.sql = item["query"].get<std::string>();
    s.db_id = item["db_id"].get<std::string>();
    s.split = split;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void validate_stream(const TaskStream& stream) {
  std::vector<std::string> issues;
  if (stream.tasks.empty()) throw StreamError({"empty stream: no tasks"});
  std::map<std::string, std::set<std::string>> owners;
  std::set<std::string> task_ids;
  for (const auto& task : stream.tasks) {
    if (!task_ids.insert(task.task_id).second) issues.push_back("duplicate task_id '" + task.task_id + "'");
    if (task.train.empty()) issues.push_back("task '" + task.task_id + "' has an empty train split");
    if (task.test.empty()) issues.push_back("task '" + task.task_id + "' has an empty test split");
    for (const auto& db : task.db_ids) owners[db].insert(task.task_id);
    for (const auto* split : {&task.train, &task.dev, &task.test}) {
      for (const auto& s : *split) {
        if (!stream.schemas.count(s.db_id)) {
          issues.push_back("task '" + task.task_id + "': unresolvable db_id '" + s.db_id + "'");
          continue;
        }
        if (trim(s.sql).empty()) {
          issues.push_back("task '" + task.task_id + "': empty SQL");
          continue;
        }
        try {
          sql::parse(s.sql);
        } catch (const sql::ParseError& e) {
          issues.push_back("task '" + task.task_id + "': unparseable SQL '" + s.sql + "': " + e.what());
        }
      }
    }
  }
  for (const auto& [db, tasks] : owners) {
    if (tasks.size() > 1)
      issues.push_back("disjointness violation: db '" + db + "' appears in tasks " +
                       join(std::vector<std::string>(tasks.begin(), tasks.end()), ", "));
    auto it = stream.databases.find(db);
    if (it == stream.databases.end() || !fs::exists(it->second))
      issues.push_back("missing database file for db '" + db + "'");
  }
  for (const auto& [db, schema] : stream.schemas) {
    try {
      schema.validate();
    } catch (const std::invalid_argument& e) {
      issues.push_back(e.what());
    }
  }
  if (!issues.empty()) throw StreamError(std::move(issues));
}

TaskStream load_task_stream(const fs::path& config_path) {
  if (!fs::exists(config_path)) throw StreamError({"missing file: " + config_path.string()});
  json cfg;
  try {
    cfg = json::parse(read_file(config_path));
  } catch (const json::parse_error& e) {
    throw StreamError({"malformed JSON in " + config_path.string() + ": " + e.what()});
  }
  const fs::path base = config_path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  TaskStream stream;
  stream.order_label = order_label_from(cfg.value("order_label", std::string("custom")));
  if (!cfg.contains("tasks") || !cfg["tasks"].is_array() || cfg["tasks"].empty())
    throw StreamError({"empty stream: no tasks"});

  std::vector<std::string> issues;
  const std::string default_tables = cfg.value("tables_path", std::string("tables.json"));
  std::map<fs::path, std::vector<Schema>> schema_files;

  for (const auto& entry : cfg["tasks"]) {
    Task task;
    task.task_id = entry.at("task_id").get<std::string>();
    const fs::path db_dir = resolve(entry.at("db_dir").get<std::string>());
    const fs::path tables = resolve(entry.value("tables_path", default_tables));
    task.train = load_samples(resolve(entry.at("train_path").get<std::string>()), Split::train, issues);
    task.dev = load_samples(resolve(entry.at("dev_path").get<std::string>()), Split::dev, issues);
    task.test = load_samples(resolve(entry.at("test_path").get<std::string>()), Split::test, issues);

    std::set<std::string> dbs;
    for (const auto* split : {&task.train, &task.dev, &task.test})
      for (const auto& s : *split) dbs.insert(s.db_id);
    task.db_ids.assign(dbs.begin(), dbs.end());

    if (!schema_files.count(tables)) {
      if (!fs::exists(tables)) {
        issues.push_back("missing file: " + tables.filename().string());
        schema_files[tables] = {};
      } else {
        try {
          schema_files[tables] = load_schemas(tables);
        } catch (const std::exception& e) {
          issues.push_back(std::string("cannot read schemas: ") + e.what());
          schema_files[tables] = {};
        }
      }
    }
    for (const auto& db : task.db_ids) {
      for (const auto& s : schema_files[tables]) {
        if (s.db_id != db) continue;
        Schema schema = s;
        const fs::path file = database_file(db_dir, db);
        stream.databases[db] = file;
        if (fs::exists(file)) schema.sample_rows = read_sample_rows(schema, file);
        stream.schemas[db] = std::move(schema);
      }
    }
    stream.tasks.push_back(std::move(task));
  }
  try {
    validate_stream(stream);
  } catch (const StreamError& e) {
    issues.insert(issues.end(), e.issues().begin(), e.issues().end());
  }
  if (!issues.empty()) throw StreamError(std::move(issues));
  return stream;
}

TaskStream permute_stream(const TaskStream& stream, const std::vector<int>& order) {
  if (order.size() != stream.tasks.size()) throw std::invalid_argument("permutation size does not match task count");
  std::vector<bool> seen(order.size(), false);
  TaskStream out = stream;
  out.tasks.clear();
  for (int idx : order) {
    if (idx < 1 || idx > static_cast<int>(order.size()) || seen[static_cast<std::size_t>(idx - 1)])
      throw std::invalid_argument("invalid permutation");
    seen[static_cast<std::size_t>(idx - 1)] = true;
    out.tasks.push_back(stream.tasks[static_cast<std::size_t>(idx - 1)]);
  }
  out.order_label = OrderLabel::custom;
  return out;
}

void ComponentFeatureSet::normalize() {
  std::sort(skeletons.begin(), skeletons.end());
  skeletons.erase(std::unique(skeletons.begin(), skeletons.end()), skeletons.end());
}

bool ComponentFeatureSet::contains(const std::string& skeleton) const {
  return std::any_of(skeletons.begin(), skeletons.end(), [&](const SqlSkeleton& z) { return z.skeleton == skeleton; });
}

MissingArtifact::MissingArtifact(std::string task_id, const fs::path& path)
    : std::runtime_error("missing artifact for task '" + task_id + "': " + path.string()), task_id_(std::move(task_id)) {}

std::string reproducible_timestamp() {
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string wall_clock_timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ArtifactStore::ArtifactStore(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {}

fs::path ArtifactStore::path(const std::string& task_id, const std::string& stage, const std::string& name) const {
  if (task_id.empty() || task_id.find('/') != std::string::npos || task_id.find("..") != std::string::npos)
    throw std::invalid_argument("malformed task_id '" + task_id + "'");
  return root_ / task_id / stage / name;
}

bool ArtifactStore::exists(const std::string& task_id, const std::string& stage, const std::string& name) const {
  return fs::exists(path(task_id, stage, name));
}

void ArtifactStore::write_text(const std::string& task_id, const std::string& stage, const std::string& name,
                               const std::string& contents) {
  const fs::path p = path(task_id, stage, name);
  if (fs::exists(p)) spdlog::warn("overwriting artifact {}", p.string());
  write_file_atomic(p, contents);
}

std::string ArtifactStore::read_text(const std::string& task_id, const std::string& stage,
                                     const std::string& name) const {
  const fs::path p = path(task_id, stage, name);
  if (!fs::exists(p)) throw MissingArtifact(task_id, p);
  return read_file(p);
}

void ArtifactStore::write_json(const std::string& task_id, const std::string& stage, const std::string& name,
                               const json& value) {
  write_text(task_id, stage, name, value.dump(2) + "\n");
}

json ArtifactStore::read_json(const std::string& task_id, const std::string& stage, const std::string& name) const {
  return json::parse(read_text(task_id, stage, name));
}

void ArtifactStore::write_jsonl(const std::string& task_id, const std::string& stage, const std::string& name,
                                const std::vector<json>& records) {
  write_text(task_id, stage, name, to_jsonl(records));
}

std::vector<json> ArtifactStore::read_jsonl(const std::string& task_id, const std::string& stage,
                                            const std::string& name) const {
  return parse_jsonl(read_text(task_id, stage, name), path(task_id, stage, name).string());
}

json feature_set_record(const SqlSkeleton& z) {
  return json{{"skeleton", z.skeleton}, {"simplified", simplify_skeleton(z)}, {"nested", z.nested}};
}

std::string serialize_feature_set(const ComponentFeatureSet& set) {
  ComponentFeatureSet sorted = set;
  sorted.normalize();
  std::vector<json> records;
  for (const auto& z : sorted.skeletons) records.push_back(feature_set_record(z));
  return to_jsonl(records);
}

ComponentFeatureSet parse_feature_set(const std::string& task_id, const std::string& jsonl, int k_used) {
  ComponentFeatureSet set;
  set.task_id = task_id;
  set.k_used = k_used;
  for (const auto& rec : parse_jsonl(jsonl, task_id + "/" + kFeatureSetFile)) {
    SqlSkeleton z = extract_skeleton(rec.at("skeleton").get<std::string>());
    if (z.skeleton != rec["skeleton"].get<std::string>())
      throw std::runtime_error("stored skeleton is not canonical: " + rec["skeleton"].get<std::string>());
    set.skeletons.push_back(std::move(z));
  }
  set.normalize();
  return set;
}

void save_feature_set(ArtifactStore& store, const std::string& task_id, const ComponentFeatureSet& set) {
  for (const auto& z : set.skeletons) {
    auto leaks = find_leaks(z.skeleton, store.guard_identifiers());
    if (!leaks.empty())
      throw LeakageError("skeleton '" + z.skeleton + "' contains schema identifier '" + leaks.front() + "'");
    SqlSkeleton again;
    try {
      again = extract_skeleton(z.skeleton);
    } catch (const sql::ParseError& e) {
      throw LeakageError("skeleton '" + z.skeleton + "' does not parse: " + e.what());
    }
    if (again.skeleton != z.skeleton)
      throw LeakageError("'" + z.skeleton + "' is not a canonical skeleton (expected '" + again.skeleton + "')");
  }
  store.write_text(task_id, kAnalyzeStage, kFeatureSetFile, serialize_feature_set(set));
  store.write_json(task_id, kAnalyzeStage, kFeatureSetMetaFile,
                   json{{"task_id", task_id}, {"k_used", set.k_used}, {"created", store.now()},
                        {"count", set.skeletons.size()}});
}

ComponentFeatureSet load_feature_set(const ArtifactStore& store, const std::string& task_id) {
  const std::string text = store.read_text(task_id, kAnalyzeStage, kFeatureSetFile);
  const json meta = store.read_json(task_id, kAnalyzeStage, kFeatureSetMetaFile);
  return parse_feature_set(task_id, text, meta.at("k_used").get<int>());
}

std::vector<ComponentFeatureSet> load_feature_sets_before(const ArtifactStore& store, int task_index) {
  if (task_index < 1) throw std::invalid_argument("task_index must be >= 1");
  const auto& order = store.task_order();
  if (static_cast<std::size_t>(task_index - 1) > order.size())
    throw std::out_of_range("task_index beyond the stream length");
  std::vector<ComponentFeatureSet> out;
  for (int i = 0; i < task_index - 1; ++i) out.push_back(load_feature_set(store, order[static_cast<std::size_t>(i)]));
  return out;
}

std::vector<ReplayHit> scan_cross_task_state(const ArtifactStore& store, const TaskStream& stream) {
  std::vector<std::string> identifiers = stream.all_identifiers();
  std::set<std::string> values;
  for (const auto& [db, path] : stream.databases) {
    if (!fs::exists(path)) continue;
    Connection conn(path);
    const Schema& schema = stream.schema(db);
    for (const auto& t : schema.tables) {
      auto outcome = conn.run("SELECT * FROM " + quote_ident(t), std::chrono::milliseconds(5000), 100000);
      if (!outcome.ok()) continue;
      for (const auto& row : outcome.rows)
        for (const auto& v : row)
          if (std::holds_alternative<std::string>(v) && !std::get<std::string>(v).empty())
            values.insert(std::get<std::string>(v));
    }
  }
  std::vector<std::string> questions;
  for (const auto& task : stream.tasks)
    for (const auto* split : {&task.train, &task.dev, &task.test})
      for (const auto& s : *split) questions.push_back(to_lower(s.question));
  const std::vector<std::string> value_list(values.begin(), values.end());

  std::vector<ReplayHit> hits;
  if (!fs::exists(store.root())) return hits;
  for (const auto& task_dir : fs::directory_iterator(store.root())) {
    const fs::path dir = task_dir.path() / kAnalyzeStage;
    if (!fs::is_directory(dir)) continue;
    for (const auto& file : fs::directory_iterator(dir)) {
      if (file.path().extension() != ".jsonl") continue;
      for (const auto& rec : parse_jsonl(read_file(file.path()), file.path().string())) {
        for (const auto& [key, val] : rec.items()) {
          if (!val.is_string()) continue;
          const std::string text = val.get<std::string>();
          for (auto& leak : find_leaks(text, identifiers, value_list)) hits.push_back({file.path(), leak});
          const std::string low = to_lower(text);
          for (const auto& q : questions)
            if (!q.empty() && low.find(q) != std::string::npos) hits.push_back({file.path(), q});
        }
      }
    }
  }
  return hits;
}

}  // namespace csp

#include "csp/fixtures.hpp"

#include <algorithm>

#include "csp/dataset_io.hpp"
#include "csp/llm_gateway.hpp"
#include "csp/sql_exec.hpp"

namespace csp {

namespace fs = std::filesystem;

std::string build_manifest(const fs::path& root) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (rel == "MANIFEST.json" || e.path().extension() == ".py" || rel.find("__pycache__") != std::string::npos)
      continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json list = json::array();
  for (const auto& f : files) list.push_back({{"path", f}, {"sha256", sha256_file(root / f)}});
  return json{{"files", list}}.dump(2) + "\n";
}

FixtureReport verify_fixtures(const fs::path& root) {
  FixtureReport r;
  const fs::path manifest = root / "MANIFEST.json";
  if (!fs::exists(manifest)) {
    r.problems.push_back("missing MANIFEST.json");
    return r;
  }
  const json doc = read_json_file(manifest);
  for (const auto& f : doc.at("files")) {
    const std::string rel = f.at("path").get<std::string>();
    const fs::path p = root / rel;
    if (!fs::exists(p)) {
      r.problems.push_back(rel + ": missing");
    } else if (sha256_file(p) != f.at("sha256").get<std::string>()) {
      r.problems.push_back(rel + ": hash mismatch");
    } else {
      r.checked.push_back(rel);
    }
    if (p.extension() == ".jsonl" && rel.find("mock") != std::string::npos && fs::exists(p)) {
      try {
        MockProvider::parse_script(read_file(p));
      } catch (const std::exception& e) {
        r.problems.push_back(rel + ": bad mock script: " + e.what());
      }
    }
  }

  TaskStream stream;
  try {
    stream = load_task_stream(root / "stream" / "stream.json");
  } catch (const StreamError& e) {
    for (const auto& issue : e.issues()) r.problems.push_back("stream: " + issue);
    return r;
  }
  Executor exec(stream.databases);
  for (const auto& task : stream.tasks)
    for (const auto* split : {&task.train, &task.dev, &task.test})
      for (const auto& s : *split) {
        const auto out = exec.execute(s.db_id, s.sql);
        if (!out.ok()) r.problems.push_back(task.task_id + ": SQL fails: " + s.sql + ": " + out.error_message);
      }
  return r;
}

}  // namespace csp

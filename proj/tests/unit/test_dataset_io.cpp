#include "doctest.h"
#include "support.hpp"

#include "csp/dataset_io.hpp"
#include "csp/memory_completion.hpp"

using namespace csp;
namespace fs = std::filesystem;

namespace {

// Writes a stream config over the fixture files with the given per-task
// overrides, then returns its path.
fs::path write_config(const fs::path& dir, const json& tasks) {
  const fs::path p = dir / "stream.json";
  write_file_atomic(p, json{{"tables_path", (testsupport::fixture_root() / "stream" / "tables.json").string()},
                            {"tasks", tasks}}
                           .dump());
  return p;
}

json task_entry(const std::string& id, const std::string& folder) {
  const auto root = testsupport::fixture_root() / "stream";
  return {{"task_id", id},
          {"train_path", (root / folder / "train.json").string()},
          {"dev_path", (root / folder / "dev.json").string()},
          {"test_path", (root / folder / "test.json").string()},
          {"db_dir", (root / "database").string()}};
}

std::vector<std::string> issues_of(const fs::path& config) {
  try {
    load_task_stream(config);
  } catch (const StreamError& e) {
    return e.issues();
  }
  return {};
}

}  // namespace

TEST_CASE("fixture stream loads") {
  const auto& s = testsupport::fixture_stream();
  REQUIRE(s.tasks.size() == 3);
  CHECK(s.order_label == OrderLabel::warm_start);
  CHECK(s.task_ids() == std::vector<std::string>{"t1_concert", "t2_pets", "t3_employees"});
  for (const auto& t : s.tasks) {
    CHECK(t.train.size() >= 10);
    CHECK(t.train.size() <= 15);
    CHECK(t.db_ids.size() == 1);
  }
  const auto& schema = s.schema("concert_singer");
  CHECK(schema.find_table("singer") >= 0);
  REQUIRE(schema.sample_rows.size() == schema.tables.size());
  const int singer = schema.find_table("singer");
  CHECK(schema.sample_rows[static_cast<std::size_t>(singer)][1] == "Joe Sharp");
  CHECK_THROWS(s.schema("missing"));
}

TEST_CASE("validation catches broken streams") {
  testsupport::TempDir dir("stream");
  SUBCASE("disjointness") {
    const auto issues = issues_of(write_config(
        dir.path(), json::array({task_entry("a", "t1_concert"), task_entry("b", "t1_concert")})));
    REQUIRE(issues.size() == 1);
    CHECK(issues[0] == "disjointness violation: db 'concert_singer' appears in tasks a, b");
  }
  SUBCASE("duplicate ids and missing files") {
    auto broken = task_entry("a", "t2_pets");
    broken["test_path"] = (dir.path() / "nope.json").string();
    const auto issues =
        issues_of(write_config(dir.path(), json::array({task_entry("a", "t1_concert"), broken})));
    CHECK(std::find(issues.begin(), issues.end(), "duplicate task_id 'a'") != issues.end());
    CHECK(std::find(issues.begin(), issues.end(), "missing file: nope.json") != issues.end());
  }
  SUBCASE("unparseable SQL and unknown db") {
    write_file_atomic(dir.path() / "train.json",
                      json::array({{{"question", "q"}, {"query", "SELECT FROM"}, {"db_id", "pets_1"}},
                                   {{"question", "q"}, {"query", "SELECT 1"}, {"db_id", "ghost"}}})
                          .dump());
    auto t = task_entry("a", "t2_pets");
    t["train_path"] = (dir.path() / "train.json").string();
    const auto issues = issues_of(write_config(dir.path(), json::array({t})));
    auto has = [&](const std::string& needle) {
      return std::any_of(issues.begin(), issues.end(), [&](const auto& i) { return i.find(needle) != std::string::npos; });
    };
    CHECK(has("unparseable SQL 'SELECT FROM'"));
    CHECK(has("unresolvable db_id 'ghost'"));
    CHECK(has("missing database file for db 'ghost'"));
  }
  SUBCASE("issues do not depend on task order") {
    auto bad = task_entry("c", "t3_employees");
    bad["dev_path"] = (dir.path() / "missing_dev.json").string();
    const json forward = json::array({task_entry("a", "t1_concert"), task_entry("b", "t1_concert"), bad});
    const json backward = json::array({bad, task_entry("b", "t1_concert"), task_entry("a", "t1_concert")});
    const auto i1 = issues_of(write_config(dir.path(), forward));
    const auto i2 = issues_of(write_config(dir.path(), backward));
    CHECK_FALSE(i1.empty());
    CHECK(i1 == i2);
  }
}

TEST_CASE("permute_stream") {
  const auto& s = testsupport::fixture_stream();
  const auto p = permute_stream(s, {3, 1, 2});
  CHECK(p.task_ids() == std::vector<std::string>{"t3_employees", "t1_concert", "t2_pets"});
  CHECK_THROWS(permute_stream(s, {1, 1, 2}));
  CHECK_THROWS(permute_stream(s, {1, 2}));
}

TEST_CASE("artifact store") {
  testsupport::TempDir dir("store");
  ArtifactStore store(dir.path());
  CHECK_THROWS(store.path("../x", "s", "f"));
  CHECK_THROWS(store.path("a/b", "s", "f"));
  CHECK_THROWS_AS(store.read_text("t", "s", "missing.json"), MissingArtifact);
  store.write_json("t", "s", "v.json", json{{"b", 1}, {"a", 2}});
  CHECK(store.read_json("t", "s", "v.json") == json{{"a", 2}, {"b", 1}});
  const std::vector<json> recs = {{{"z", 1}, {"a", "x"}}, {{"k", json::array({1, 2})}}};
  store.write_jsonl("t", "s", "r.jsonl", recs);
  CHECK(store.read_text("t", "s", "r.jsonl") == "{\"a\":\"x\",\"z\":1}\n{\"k\":[1,2]}\n");
  CHECK(store.read_jsonl("t", "s", "r.jsonl") == recs);
}

TEST_CASE("pseudo sample records round-trip") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    PseudoSample p;
    p.question = "q" + std::to_string(rng.below(100)) + " \"quoted\" é";
    p.sql = "SELECT " + std::to_string(rng.below(9));
    p.db_id = "db";
    p.source_skeleton = rng.below(2) ? "SELECT [COL] FROM [TAB]" : "";
    p.provenance = rng.below(2) ? "ske" : "cfg";
    p.status = static_cast<SampleStatus>(rng.below(4));
    p.revisions = static_cast<int>(rng.below(4));
    p.cause = rng.below(2) ? "not-verified" : "";
    p.detail = rng.below(2) ? "Incorrect" : "";
    if (rng.below(2)) p.edit_distance = rng.below(10);
    p.llm_calls = static_cast<int>(rng.below(8));
    p.generation_index = static_cast<int>(rng.below(30));
    const auto j = p.to_json();
    const auto back = PseudoSample::from_json(json::parse(j.dump()));
    CHECK(back.to_json() == j);
    CHECK(to_jsonl({back.to_json()}) == to_jsonl({j}));
  }
}

TEST_CASE("leakage guard and replay scanner") {
  const auto& stream = testsupport::fixture_stream();
  testsupport::TempDir dir("scan");
  ArtifactStore store(dir.path());
  store.set_task_order(stream.task_ids());
  store.set_guard_identifiers(stream.all_identifiers());

  ComponentFeatureSet clean;
  clean.task_id = "t1_concert";
  clean.skeletons = {extract_skeleton("SELECT name FROM singer WHERE age > 3")};
  clean.k_used = 1;
  save_feature_set(store, "t1_concert", clean);
  CHECK(scan_cross_task_state(store, stream).empty());

  ComponentFeatureSet dirty = clean;
  dirty.skeletons[0].skeleton = "SELECT singer FROM [TAB]";
  CHECK_THROWS_AS(save_feature_set(store, "t1_concert", dirty), LeakageError);

  // plant records directly to exercise each scanner class
  store.write_jsonl("t2_pets", kAnalyzeStage, "feature_set.jsonl",
                    {{{"skeleton", "SELECT [COL] FROM [TAB] WHERE [COL] = 'Bristol'"}},
                     {{"skeleton", "How many pets are there?"}},
                     {{"skeleton", "SELECT stu_id FROM [TAB]"}}});
  const auto hits = scan_cross_task_state(store, stream);
  CHECK(hits.size() >= 3);
}

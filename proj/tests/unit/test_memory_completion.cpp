#include "doctest.h"
#include "support.hpp"

#include "csp/memory_completion.hpp"

using namespace csp;

namespace {

const Schema& singers() { return testsupport::fixture_stream().schema("concert_singer"); }

PseudoSample raw(const std::string& q, const std::string& sql, const std::string& db = "concert_singer") {
  PseudoSample p;
  p.question = q;
  p.sql = sql;
  p.db_id = db;
  p.source_skeleton = extract_skeleton(sql).skeleton;
  return p;
}

ComponentFeatureSet set_of(const std::vector<std::string>& sqls) {
  ComponentFeatureSet s;
  s.task_id = "x";
  for (const auto& q : sqls) s.skeletons.push_back(extract_skeleton(q));
  s.normalize();
  s.k_used = static_cast<int>(s.skeletons.size());
  return s;
}

MockProvider calibration_mock() { return MockProvider::from_file(testsupport::mock_dir() / "calibration.jsonl"); }

}  // namespace

TEST_CASE("generation targets and counts") {
  const auto a = set_of({"SELECT name FROM singer", "SELECT count(*) FROM singer WHERE age > 3"});
  ComponentBias bias;
  CHECK(generation_targets(1, a, bias).size() == 2);
  CHECK(generation_targets(2, a, bias).empty());

  auto mock = MockProvider::from_jsonl(
      "{\"match\":{\"kind\":\"generate\"},\"response\":\"Question: How many?\\nSQL: SELECT count(*) FROM singer\",\"repeat\":true}");
  CompletionConfig cfg;
  GenerationLog log;
  const auto out = generate_for_task(1, a, bias, {&singers()}, mock, cfg, 7, &log);
  CHECK(out.size() <= 20);
  CHECK(out.size() == 20);
  std::map<std::string, int> per;
  for (const auto& s : out) {
    CHECK(s.status == SampleStatus::raw);
    CHECK(s.provenance == "ske");
    CHECK(a.contains(s.source_skeleton));
    ++per[s.source_skeleton];
  }
  for (const auto& [k, n] : per) CHECK(n == 10);

  GenerationLog empty_log;
  CHECK(generate_for_task(3, a, bias, {&singers()}, mock, cfg, 7, &empty_log).empty());
  CHECK_FALSE(empty_log.notices.empty());

  auto one = MockProvider::from_jsonl(
      "{\"match\":{},\"response\":\"Question: Ages?\\nSQL: SELECT age FROM singer\",\"repeat\":true}");
  CompletionConfig three;
  three.n_ske = 3;
  CHECK(generate_for_task(1, set_of({"SELECT name FROM singer"}), bias, {&singers()}, one, three, 1).size() == 3);
}

TEST_CASE("generation failures are logged, and all-failed provider errors surface") {
  const auto a = set_of({"SELECT name FROM singer"});
  CompletionConfig cfg;
  cfg.n_ske = 4;
  auto half = MockProvider::from_jsonl(
      "{\"match\":{\"ordinal\":1},\"response\":\"no markers here\"}\n"
      "{\"match\":{\"ordinal\":2},\"error\":\"HTTP 500\"}\n"
      "{\"match\":{},\"response\":\"Question: Names?\\nSQL: SELECT name FROM singer\",\"repeat\":true}");
  GenerationLog log;
  CHECK(generate_for_task(1, a, {}, {&singers()}, half, cfg, 7, &log).size() == 2);
  CHECK(log.failures.begin()->second == 2);

  auto dead = MockProvider::from_jsonl("{\"match\":{},\"error\":\"down\",\"repeat\":true}");
  CHECK_THROWS_AS(generate_for_task(1, a, {}, {&singers()}, dead, cfg, 7), ProviderError);

  auto junk = MockProvider::from_jsonl("{\"match\":{},\"response\":\"nothing useful\",\"repeat\":true}");
  GenerationLog jlog;
  CHECK(generate_for_task(1, a, {}, {&singers()}, junk, cfg, 7, &jlog).empty());
  CHECK(jlog.failed_skeletons.size() == 1);
}

TEST_CASE("self-correction traces follow the script") {
  Executor ex(testsupport::fixture_stream().databases);
  auto mock = calibration_mock();
  CompletionConfig cfg;

  const auto verified =
      self_correct_one(raw("What is the song name of Joe Sharp?", "SELECT song_name FROM singer WHERE name = 'Joe Sharp'"),
                       ex, singers(), mock, cfg);
  CHECK(verified.status == SampleStatus::verified);
  CHECK(verified.revisions == 0);
  CHECK(verified.llm_calls == 1);

  const auto corrected = self_correct_one(
      raw("How many singers are from Japan?", "SELECT count(*) FROM singer WHERE nation = 'Japan'"), ex, singers(),
      mock, cfg);
  CHECK(corrected.status == SampleStatus::corrected);
  CHECK(corrected.revisions == 2);
  CHECK(corrected.sql == "SELECT count(*) FROM singer WHERE country = 'Japan'");
  CHECK(corrected.llm_calls == 4);

  const auto refused = self_correct_one(
      raw("Which singer is the tallest?", "SELECT name FROM singer ORDER BY age DESC LIMIT 1"), ex, singers(), mock,
      cfg);
  CHECK(refused.status == SampleStatus::rejected);
  CHECK(refused.revisions == 3);
  CHECK(refused.cause == "not-verified");
  CHECK(refused.llm_calls == 1 + 2 * 3);
  CHECK(refused.detail.find("Incorrect") != std::string::npos);

  const auto broken = self_correct_one(
      raw("What is the height of Lin Wei?", "SELECT height FROM singer WHERE name = 'Lin Wei'"), ex, singers(), mock,
      cfg);
  CHECK(broken.status == SampleStatus::rejected);
  CHECK(broken.revisions == 3);
  CHECK(broken.cause == "not-verified");
  CHECK(broken.detail.find("no such column") != std::string::npos);
  CHECK(broken.llm_calls == 3);
}

TEST_CASE("provider and database failures reject with a cause") {
  Executor ex(testsupport::fixture_stream().databases);
  CompletionConfig cfg;
  auto dead = MockProvider::from_jsonl("{\"match\":{},\"error\":\"down\",\"repeat\":true}");
  const auto p = self_correct_one(raw("Names?", "SELECT name FROM singer"), ex, singers(), dead, cfg);
  CHECK(p.status == SampleStatus::rejected);
  CHECK(p.cause == "provider-error");

  auto ok = MockProvider::from_jsonl("{\"match\":{},\"response\":\"Correct\",\"repeat\":true}");
  auto ghost = raw("Names?", "SELECT name FROM singer", "ghost");
  const auto m = self_correct(std::vector<PseudoSample>{ghost}, ex, testsupport::fixture_stream().schemas, ok, cfg);
  REQUIRE(m.size() == 1);
  CHECK(m[0].status == SampleStatus::rejected);
  CHECK(m[0].cause == "missing-database");
}

TEST_CASE("sample_by_skeleton examples") {
  CompletionConfig cfg;
  const std::string source = "SELECT [COL] FROM [TAB] WHERE [COL] = [VAL]";
  // distances 7, 1, 4, 0, 1 from the source skeleton, in generation order
  const std::vector<std::string> sqls = {
      "SELECT count(*) FROM t WHERE b = 1 GROUP BY c",
      "SELECT a FROM t WHERE b > 1",
      "SELECT a FROM t",
      "SELECT a FROM t WHERE b = 1",
      "SELECT DISTINCT a FROM t WHERE b = 1",
  };
  std::vector<PseudoSample> cands;
  for (std::size_t i = 0; i < sqls.size(); ++i) {
    auto p = raw("q", sqls[i]);
    p.source_skeleton = source;
    p.status = SampleStatus::verified;
    p.generation_index = static_cast<int>(i);
    cands.push_back(p);
  }
  std::vector<std::size_t> dist;
  for (const auto& c : cands)
    dist.push_back(testsupport::levenshtein(extract_skeleton(c.sql).token_seq, extract_skeleton(source).token_seq));
  REQUIRE(dist == std::vector<std::size_t>{7, 1, 4, 0, 1});

  const auto top = sample_by_skeleton(cands, cfg);
  REQUIRE(top.size() == 3);
  CHECK(top[0].generation_index == 3);
  CHECK(top[1].generation_index == 1);
  CHECK(top[2].generation_index == 4);
  CHECK(*top[0].edit_distance == 0);
  CHECK(*top[1].edit_distance == 1);
  CHECK(*top[2].edit_distance == 1);

  const auto two = sample_by_skeleton({cands[0], cands[2]}, cfg);
  CHECK(two.size() == 2);

  auto junk = cands[3];
  junk.sql = "SELECT FROM WHERE";
  CHECK(sample_by_skeleton({junk, cands[1]}, cfg).size() == 1);
}

TEST_CASE("sample_by_skeleton equals a full-sort oracle") {
  Rng rng(17);
  CompletionConfig cfg;
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<std::string> sources;
    for (int i = 0; i < 3; ++i) sources.push_back(extract_skeleton(testsupport::random_skeleton_sql(rng)).skeleton);
    std::vector<PseudoSample> cands;
    const int n = static_cast<int>(rng.below(15));
    for (int i = 0; i < n; ++i) {
      PseudoSample p;
      p.sql = testsupport::random_skeleton_sql(rng);
      p.source_skeleton = sources[rng.below(3)];
      p.status = rng.below(2) ? SampleStatus::verified : SampleStatus::corrected;
      p.generation_index = i;
      cands.push_back(p);
    }
    cfg.r_top = 1 + static_cast<int>(rng.below(4));
    const auto got = sample_by_skeleton(cands, cfg);

    std::map<std::string, std::vector<std::pair<std::size_t, int>>> groups;
    for (const auto& c : cands) {
      const auto a = extract_skeleton(c.sql), b = extract_skeleton(c.source_skeleton);
      groups[c.source_skeleton].push_back({testsupport::levenshtein(a.token_seq, b.token_seq), c.generation_index});
    }
    std::vector<std::pair<std::size_t, int>> expected;
    for (auto& [src, v] : groups) {
      std::sort(v.begin(), v.end());
      v.resize(std::min<std::size_t>(v.size(), static_cast<std::size_t>(cfg.r_top)));
      expected.insert(expected.end(), v.begin(), v.end());
    }
    std::vector<std::pair<std::size_t, int>> actual;
    for (const auto& g : got) actual.push_back({*g.edit_distance, g.generation_index});
    CHECK(actual == expected);
  }
}

TEST_CASE("complete_memory on fixture task 1 matches the hand trace and is reproducible") {
  const auto& stream = testsupport::fixture_stream();
  std::string first;
  for (int run = 0; run < 2; ++run) {
    testsupport::TempDir dir("memory");
    ArtifactStore store(dir.path());
    store.set_task_order(stream.task_ids());
    store.set_guard_identifiers(stream.all_identifiers());
    LocalFeaturizer f;
    save_feature_set(store, "t1_concert", extract_feature_set(stream.tasks[0], stream.schemas, f, 80, 7));
    save_bias(store, ComponentBias{"t1_concert", {}});
    Executor ex(stream.databases);
    auto mock = MockProvider::from_file(testsupport::mock_dir() / "stream.jsonl");
    const auto result = complete_memory(store, stream, 1, ex, mock, CompletionConfig{}, 7);

    const auto& c = result.report.at("counts");
    CHECK(c.at("raw") == 120);
    CHECK(c.at("verified") == 70);
    CHECK(c.at("corrected") == 40);
    CHECK(c.at("rejected") == 10);
    CHECK(c.at("selected") == 33);
    CHECK(result.report.at("max_llm_calls_per_sample").get<int>() <= 7);

    for (const auto& s : from_records(store.read_jsonl("t1_concert", kCalibrateStage, kSelectedFile))) {
      CHECK(s.accepted());
      CHECK(ex.execute(s.db_id, s.sql).ok());
    }
    for (const auto& s : from_records(store.read_jsonl("t1_concert", kCalibrateStage, kQuarantineFile)))
      CHECK_FALSE(s.cause.empty());
    const std::string bytes = store.read_text("t1_concert", kCalibrateStage, kSelectedFile) +
                              store.read_text("t1_concert", kCalibrateStage, kReportFile);
    if (run == 0)
      first = bytes;
    else
      CHECK(bytes == first);
  }
}

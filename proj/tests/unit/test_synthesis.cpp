#include "doctest.h"
#include "support.hpp"
#include "sync_check.hpp"

#include "csp/synthesis.hpp"

using namespace csp;

namespace {

const TaskSample kFrance{"What are the names of singers whose country is France?",
                         "SELECT name FROM singer WHERE country = 'France'", "concert_singer"};

}  // namespace

TEST_CASE("value swaps draw from the linked column") {
  const auto& stream = testsupport::fixture_stream();
  Executor ex(stream.databases);
  const auto& schema = stream.schema("concert_singer");
  const auto cands = swap_candidates(kFrance, schema, ex, 7);
  std::set<std::string> values;
  for (const auto& c : cands)
    if (c.provenance == SwapProvenance::same_column_value) values.insert(c.replacement);
  CHECK(values == std::set<std::string>{"Japan", "Netherlands", "United States"});
  for (const auto& c : cands)
    if (c.provenance == SwapProvenance::same_table_column) {
      const int t = schema.find_table("singer");
      const int col = schema.find_column(t, c.sql_text);
      REQUIRE(col >= 0);
      CHECK(schema.columns[static_cast<std::size_t>(col)].kind == ValueKind::text);
    }

  const auto out = synthesize(kFrance, schema, ex, 3, 7);
  CHECK(out.size() <= 3);
  CHECK_FALSE(out.empty());
  for (const auto& p : out) {
    CHECK(ex.execute("concert_singer", p.sql).ok());
    const auto sync = testsupport::check_synchronized(kFrance, p, schema, ex, 7);
    CHECK_MESSAGE(sync.ok, sync.why);
  }

  // Japan always comes through when the cap allows every candidate
  bool japan = false;
  for (const auto& p : synthesize(kFrance, schema, ex, 100, 7))
    japan = japan || (p.sql == "SELECT name FROM singer WHERE country = 'Japan'" &&
                      p.question == "What are the names of singers whose country is Japan?");
  CHECK(japan);
}

TEST_CASE("execution is the only filter") {
  const auto& stream = testsupport::fixture_stream();
  Executor ex(stream.databases);
  // a text value swapped into a numeric comparison still executes and is kept
  const TaskSample s{"Which singers are aged 52?", "SELECT name FROM singer WHERE age = 52", "concert_singer"};
  for (const auto& p : synthesize(s, stream.schema("concert_singer"), ex, 50, 3))
    CHECK(ex.execute("concert_singer", p.sql).ok());
}

TEST_CASE("degenerate and failing inputs") {
  const auto& stream = testsupport::fixture_stream();
  Executor ex(stream.databases);
  const TaskSample bare{"Tell me everything.", "SELECT count(*) FROM singer", "concert_singer"};
  CHECK(synthesize(bare, stream.schema("concert_singer"), ex, 3, 7).empty());
  const TaskSample broken{"Names?", "SELECT FROM", "concert_singer"};
  CHECK_THROWS(synthesize(broken, stream.schema("concert_singer"), ex, 3, 7));
  Executor empty(std::map<std::string, std::filesystem::path>{});
  CHECK_THROWS_AS(synthesize(kFrance, stream.schema("concert_singer"), empty, 3, 7), DatabaseMissing);
}

TEST_CASE("synthesis over every fixture train sample") {
  const auto& stream = testsupport::fixture_stream();
  Executor ex(stream.databases);
  std::size_t total = 0;
  for (const auto& t : stream.tasks)
    for (std::size_t i = 0; i < t.train.size(); ++i) {
      const auto& s = t.train[i];
      const auto out = synthesize(s, stream.schema(s.db_id), ex, 3, 7 + i);
      CHECK(out.size() <= 3);
      total += out.size();
      for (const auto& p : out) {
        CHECK(ex.execute(s.db_id, p.sql).ok());
        const auto sync = testsupport::check_synchronized(s, p, stream.schema(s.db_id), ex, 7 + i);
        CHECK_MESSAGE(sync.ok, s.sql << " -> " << p.sql << ": " << sync.why);
      }
    }
  CHECK(total > 0);
}

TEST_CASE("rephrase keeps SQL and falls back per item") {
  std::vector<GeneratedPair> pairs = {{"Q one?", "SELECT 1"}, {"Q two?", "SELECT 2"}, {"Q three?", "SELECT 3"}};
  auto mock = MockProvider::from_jsonl(
      "{\"match\":{\"ordinal\":2},\"error\":\"rate limited\"}\n"
      "{\"match\":{},\"response\":\"Paraphrased question?\\nextra line\",\"repeat\":true}");
  const auto out = rephrase(pairs, mock);
  REQUIRE(out.size() == 3);
  CHECK(out[0].question == "Paraphrased question?");
  CHECK(out[1].question == "Q two?");
  CHECK(out[2].question == "Paraphrased question?");
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i].sql == pairs[i].sql);
  CHECK(rephrase({}, mock).empty());
}

#include <cctype>

#include "doctest.h"
#include "support.hpp"

#include "csp/skeletonizer.hpp"

using namespace csp;
using testsupport::corpus;
using testsupport::fixture_stream;

namespace {

// Keywords counted by a scanner that shares nothing with the SQL lexer.
// AS is left out because alias definitions are dropped on purpose.
std::multiset<std::string> keyword_multiset(const std::string& text) {
  static const std::set<std::string> kw = {"SELECT", "FROM",   "WHERE", "GROUP",     "BY",     "ORDER",
                                           "HAVING", "JOIN",   "ON",    "AND",       "OR",     "NOT",
                                           "IN",     "LIKE",   "BETWEEN", "LIMIT",   "DESC",   "ASC",
                                           "DISTINCT", "UNION", "INTERSECT", "EXCEPT", "EXISTS"};
  std::multiset<std::string> out;
  std::string word;
  char quote = 0;
  auto flush = [&] {
    if (!word.empty() && kw.count(to_upper(word))) out.insert(to_upper(word));
    word.clear();
  };
  for (char c : text) {
    if (quote) {
      if (c == quote) quote = 0;
      continue;
    }
    if (c == '\'' || c == '"') {
      flush();
      quote = c;
    } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      word += c;
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string w;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      w += c;
    } else if (!w.empty()) {
      out.push_back(to_lower(w));
      w.clear();
    }
  }
  if (!w.empty()) out.push_back(to_lower(w));
  return out;
}

std::vector<std::string> quoted_literals(const std::string& sql) {
  std::vector<std::string> out;
  std::string cur;
  bool in = false;
  for (char c : sql) {
    if (c == '\'') {
      if (in) out.push_back(cur);
      cur.clear();
      in = !in;
    } else if (in) {
      cur += c;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("extract_skeleton examples") {
  CHECK(extract_skeleton("SELECT name FROM singer WHERE age > 20").skeleton ==
        "SELECT [COL] FROM [TAB] WHERE [COL] > [VAL]");
  CHECK(extract_skeleton("SELECT [COL] FROM [TAB] WHERE [COL] > [VAL]").skeleton ==
        "SELECT [COL] FROM [TAB] WHERE [COL] > [VAL]");
  const auto z = extract_skeleton("SELECT name FROM t WHERE id IN (SELECT id FROM s)");
  CHECK(z.skeleton == "SELECT [COL] FROM [TAB] WHERE [COL] IN (SELECT [COL] FROM [TAB])");
  CHECK(z.nested);
  CHECK_FALSE(extract_skeleton("SELECT name FROM singer").nested);
}

TEST_CASE("aliases are stripped and both joined tables masked") {
  const auto z = extract_skeleton(
      "SELECT T2.name FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id");
  CHECK(z.skeleton == "SELECT [COL] FROM [TAB] JOIN [TAB] ON [COL] = [COL]");
}

TEST_CASE("star, DISTINCT and LIMIT handling") {
  CHECK(extract_skeleton("SELECT count(*) FROM singer").skeleton == "SELECT count(*) FROM [TAB]");
  CHECK(extract_skeleton("select distinct name from singer order by age desc limit 3").skeleton ==
        "SELECT DISTINCT [COL] FROM [TAB] ORDER BY [COL] DESC LIMIT [VAL]");
}

TEST_CASE("unsupported and broken SQL is reported with the token") {
  CHECK_THROWS_AS(extract_skeleton("DELETE FROM singer"), sql::ParseError);
  CHECK_THROWS_AS(extract_skeleton("SELECT name FROM"), sql::ParseError);
  try {
    extract_skeleton("SELECT name FROM singer WHERE");
    FAIL("expected a parse error");
  } catch (const sql::ParseError& e) {
    CHECK(std::string(e.what()).size() > 0);
  }
}

TEST_CASE("simplify_skeleton") {
  CHECK(simplify_skeleton(extract_skeleton("SELECT [COL1] FROM [TAB1] WHERE [COL2] = [VAL1] GROUP BY [COL1]")) ==
        "SELECT;FROM;WHERE;[<,>,=];GROUP BY");
  CHECK(simplify_skeleton(extract_skeleton("SELECT [COL] FROM [TAB]")) == "SELECT;FROM");
  const auto nested = extract_skeleton("SELECT name FROM t WHERE id IN (SELECT id FROM s)");
  CHECK(simplify_skeleton(nested).find("NESTING") != std::string::npos);
  // every key of the group shows up in one bracketed element
  const auto s = simplify_skeleton(extract_skeleton("SELECT a FROM t WHERE b LIKE 'x' AND c BETWEEN 1 AND 2"));
  CHECK(std::count(s.begin(), s.end(), '[') == 1);
}

TEST_CASE("skeleton_edit_distance examples and metric properties") {
  const auto a = extract_skeleton("SELECT [COL] FROM [TAB]");
  const auto b = extract_skeleton("SELECT [COL] FROM [TAB] WHERE [COL] = [VAL]");
  CHECK(skeleton_edit_distance(a, a) == 0);
  CHECK(skeleton_edit_distance(a, b) == 4);

  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto x = extract_skeleton(testsupport::random_skeleton_sql(rng));
    const auto y = extract_skeleton(testsupport::random_skeleton_sql(rng));
    const auto z = extract_skeleton(testsupport::random_skeleton_sql(rng));
    const auto dxy = skeleton_edit_distance(x, y);
    CHECK(dxy == skeleton_edit_distance(y, x));
    CHECK(dxy == testsupport::levenshtein(x.token_seq, y.token_seq));
    CHECK((dxy == 0) == (x.token_seq == y.token_seq));
    CHECK(skeleton_edit_distance(x, z) <= dxy + skeleton_edit_distance(y, z));
  }
}

TEST_CASE("corpus properties: idempotence, leakage-freedom, keyword preservation") {
  const auto& stream = fixture_stream();
  int checked = 0;
  for (const auto& [sql, db] : corpus()) {
    CAPTURE(sql);
    const auto z = extract_skeleton(sql);
    CHECK(extract_skeleton(z.skeleton).skeleton == z.skeleton);
    CHECK(keyword_multiset(sql) == keyword_multiset(z.skeleton));
    const auto ids = stream.schema(db).identifiers();
    for (const auto& w : words_of(z.skeleton))
      CHECK_MESSAGE(std::find(ids.begin(), ids.end(), w) == ids.end(), "identifier left in skeleton: " << w);
    const auto skeleton_words = words_of(z.skeleton);
    for (const auto& lit : quoted_literals(sql))
      for (const auto& w : words_of(lit))
        CHECK_MESSAGE(std::find(skeleton_words.begin(), skeleton_words.end(), w) == skeleton_words.end(),
                      "literal left in skeleton: " << w);
    CHECK(std::none_of(z.skeleton.begin(), z.skeleton.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }));
    ++checked;
  }
  CHECK(checked >= 40);
}

TEST_CASE("dedomain masks question spans") {
  const auto& schema = fixture_stream().schema("concert_singer");
  const auto none = dedomain("Tell me something nice?", "SELECT count(*) FROM singer", schema);
  CHECK(none.q_de == "Tell me something nice?");
  const auto d = dedomain("What are the names of singers whose country is France?",
                          "SELECT name FROM singer WHERE country = 'France'", schema);
  CHECK(d.q_de.find("France") == std::string::npos);
  CHECK(d.q_de.find("country") == std::string::npos);
  CHECK(d.q_de.find("[VAL]") != std::string::npos);
  CHECK(d.z.skeleton == "SELECT [COL] FROM [TAB] WHERE [COL] = [VAL]");
}

TEST_CASE("find_leaks flags identifiers and values") {
  const std::vector<std::string> ids = {"singer", "country"};
  const std::vector<std::string> vals = {"Joe Sharp"};
  CHECK(find_leaks("SELECT [COL] FROM [TAB]", ids, vals).empty());
  CHECK_FALSE(find_leaks("SELECT country FROM [TAB]", ids, vals).empty());
  CHECK_FALSE(find_leaks("who is joe sharp", ids, vals).empty());
}

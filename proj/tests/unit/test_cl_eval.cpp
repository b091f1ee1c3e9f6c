#include "doctest.h"
#include "support.hpp"

#include "csp/cl_eval.hpp"

using namespace csp;

namespace {

const Schema& singers() { return testsupport::fixture_stream().schema("concert_singer"); }

// Fills a matrix and the dense 1-based table the oracle reads.
AccuracyMatrix random_matrix(Rng& rng, int M, std::vector<std::vector<double>>& dense, std::vector<double>& ref) {
  AccuracyMatrix a(MetricKind::em, M);
  dense.assign(static_cast<std::size_t>(M + 1), std::vector<double>(static_cast<std::size_t>(M + 1), 0.0));
  ref.assign(static_cast<std::size_t>(M + 1), 0.0);
  for (int m = 1; m <= M; ++m)
    for (int n = 1; n <= std::min(M, m + 1); ++n) {
      const double v = rng.uniform();
      a.set(m, n, v);
      dense[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] = v;
    }
  for (int n = 1; n <= M; ++n) {
    const double r = rng.uniform();
    a.set_reference(n, r);
    ref[static_cast<std::size_t>(n)] = r;
  }
  a.combined = rng.uniform();
  return a;
}

}  // namespace

TEST_CASE("em_match") {
  const std::string gold = "SELECT name FROM singer WHERE age > 20 AND country = 'France'";
  CHECK(em_match(gold, gold, singers()));
  CHECK(em_match(gold, "select T1.name from singer as T1 where T1.country = 'France' and T1.age > 20", singers()));
  CHECK(em_match("SELECT name FROM singer WHERE age <> 3", "SELECT name FROM singer WHERE age != 3", singers()));
  CHECK_FALSE(em_match(gold, "SELECT name FROM singer WHERE age > 21 AND country = 'France'", singers()));
  CHECK_FALSE(em_match(gold, "garbage (", singers()));
  CHECK(em_match("SELECT name , age FROM singer", "SELECT age , name FROM singer", singers()));
  CHECK_FALSE(em_match("SELECT name FROM singer ORDER BY age , name", "SELECT name FROM singer ORDER BY name , age",
                       singers()));
  CHECK_FALSE(em_match("SELECT name FROM singer ORDER BY age DESC", "SELECT name FROM singer ORDER BY age", singers()));
  CHECK(em_match("SELECT T2.name FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id",
                 "SELECT stadium.name FROM stadium JOIN concert ON stadium.stadium_id = concert.stadium_id",
                 singers()));
  CHECK_FALSE(em_match("SELECT name FROM singer UNION SELECT name FROM stadium",
                       "SELECT name FROM singer INTERSECT SELECT name FROM stadium", singers()));
  CHECK_FALSE(em_match("SELECT name FROM singer LIMIT 1", "SELECT name FROM singer LIMIT 2", singers()));
}

TEST_CASE("ex_match") {
  const auto& stream = testsupport::fixture_stream();
  Executor ex(stream.databases);
  CHECK(ex_match("SELECT 2", "SELECT 1+1", "concert_singer", ex));
  CHECK_FALSE(ex_match("SELECT name FROM singer", "SELECT nope FROM singer", "concert_singer", ex));
  CHECK_FALSE(ex_match("SELECT name FROM singer ORDER BY age", "SELECT name FROM singer ORDER BY age DESC",
                       "concert_singer", ex));
  CHECK(ex_match("SELECT name FROM singer", "SELECT name FROM singer ORDER BY age DESC", "concert_singer", ex));
  CHECK_THROWS_AS(ex_match("SELECT nope FROM singer", "SELECT 1", "concert_singer", ex), DataError);
}

TEST_CASE("self-match over the corpus") {
  const auto& stream = testsupport::fixture_stream();
  Executor ex(stream.databases);
  for (const auto& [sql, db] : testsupport::corpus()) {
    CAPTURE(sql);
    CHECK(em_match(sql, sql, stream.schema(db)));
    CHECK(ex_match(sql, sql, db, ex));
  }
}

TEST_CASE("accuracy matrix cells") {
  AccuracyMatrix a(MetricKind::ex, 3);
  a.set(2, 3, 0.4);
  CHECK(a.superdiagonal[2] == 0.4);
  CHECK(a.get(2, 3) == 0.4);
  CHECK_THROWS_AS(a.set(1, 3, 0.1), std::out_of_range);
  CHECK_THROWS_AS(a.set(4, 1, 0.1), std::out_of_range);
  CHECK_THROWS_AS(a.set(1, 1, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(a.set_reference(1, -0.1), std::invalid_argument);
  CHECK_FALSE(a.get(3, 3).has_value());
  CHECK_THROWS_AS(metrics(a), MetricsError);

  Rng rng(12);
  std::vector<std::vector<double>> dense;
  std::vector<double> ref;
  const auto full = random_matrix(rng, 4, dense, ref);
  const auto j = full.to_json();
  CHECK(j["kind"] == "EM");
  CHECK(j["entries"].size() == 4);
  CHECK(j["entries"][0][3].is_null());
  CHECK(j["superdiagonal"].size() == 3);
  CHECK(AccuracyMatrix::from_json(j).to_json() == j);
}

TEST_CASE("metrics: hand example and single task") {
  AccuracyMatrix a(MetricKind::em, 2);
  a.set(1, 1, 0.8);
  a.set(2, 1, 0.6);
  a.set(2, 2, 0.7);
  a.set(1, 2, 0.3);
  a.set_reference(1, 0.0);
  a.set_reference(2, 0.1);
  const auto m = metrics(a);
  CHECK(m.acc_a == doctest::Approx(0.65).epsilon(1e-12));
  CHECK(*m.bwt == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(*m.fwt == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_FALSE(m.acc_w.has_value());

  AccuracyMatrix one(MetricKind::em, 1);
  one.set(1, 1, 0.8);
  one.set_reference(1, 0.0);
  const auto s = metrics(one);
  CHECK(s.acc_a == 0.8);
  CHECK_FALSE(s.bwt.has_value());
  CHECK_FALSE(s.fwt.has_value());
  const auto js = metrics_json(s);
  CHECK((js["BWT"].is_null() || !js.contains("BWT")));
  CHECK(format_percent(std::nullopt) == "n/a");
  CHECK(format_percent(0.65) == "65.0");
  CHECK(format_percent(-0.2) == "-20.0");
}

TEST_CASE("metrics equal the definitional oracle on random matrices") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int M = 1 + static_cast<int>(rng.below(8));
    std::vector<std::vector<double>> dense;
    std::vector<double> ref;
    const auto a = random_matrix(rng, M, dense, ref);
    const auto got = metrics(a);
    const auto want = testsupport::metrics_oracle(dense, ref, M);
    CHECK(std::fabs(got.acc_a - want.acc_a) <= 1e-12);
    CHECK(got.bwt.has_value() == want.bwt.has_value());
    CHECK(got.fwt.has_value() == want.fwt.has_value());
    if (want.bwt) CHECK(std::fabs(*got.bwt - *want.bwt) <= 1e-12);
    if (want.fwt) CHECK(std::fabs(*got.fwt - *want.fwt) <= 1e-12);
    CHECK(got.acc_w == a.combined);
    CHECK(got.acc_a >= 0.0);
    CHECK(got.acc_a <= 1.0);
    if (got.bwt) CHECK(std::fabs(*got.bwt) <= 1.0);
    if (got.fwt) CHECK(std::fabs(*got.fwt) <= 1.0);
  }
}

TEST_CASE("no forgetting gives zero BWT") {
  AccuracyMatrix a(MetricKind::em, 3);
  const double diag[] = {0.5, 0.25, 0.75};
  for (int m = 1; m <= 3; ++m)
    for (int n = 1; n <= m; ++n) a.set(m, n, diag[n - 1]);
  a.set(1, 2, 0.1);
  a.set(2, 3, 0.2);
  for (int n = 1; n <= 3; ++n) a.set_reference(n, 0.0);
  CHECK(*metrics(a).bwt == 0.0);
}

TEST_CASE("markdown report") {
  AccuracyMatrix em(MetricKind::em, 2), ex(MetricKind::ex, 2);
  for (auto* a : {&em, &ex}) {
    a->set(1, 1, 0.5);
    a->set(2, 1, 0.25);
    a->set(2, 2, 1.0);
    a->set(1, 2, 0.0);
    a->set_reference(1, 0.0);
    a->set_reference(2, 0.0);
    a->combined = 0.625;
  }
  const auto md = markdown_report(em, ex, {"first", "second"});
  CHECK(md.find("| EM | 62.5 | 62.5 | -25.0 | 0.0 |") != std::string::npos);
  CHECK(md.find("first") != std::string::npos);
}

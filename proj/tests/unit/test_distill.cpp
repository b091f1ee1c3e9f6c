#include <cmath>

#include "doctest.h"
#include "support.hpp"

#include "csp/distill.hpp"

using namespace csp;
using testsupport::FixedModel;

namespace {

constexpr int kV = 12;
constexpr int kDim = 4;

Batches random_batches(std::uint64_t seed, bool with_ske = true) {
  Rng rng(seed);
  Batches b;
  b.labeled = testsupport::random_items(rng, kV, 5, Source::labeled);
  b.cfg = testsupport::random_items(rng, kV, 3, Source::cfg);
  if (with_ske) b.ske = testsupport::random_items(rng, kV, 4, Source::ske);
  return b;
}

}  // namespace

TEST_CASE("tokenizer and vocabulary") {
  CHECK(tokenize_text("SELECT count(*) FROM singer WHERE name = 'Joe Sharp' AND age >= 2.5") ==
        std::vector<std::string>{"SELECT", "count", "(", "*", ")", "FROM", "singer", "WHERE", "name", "=",
                                 "'Joe Sharp'", "AND", "age", ">=", "2.5"});
  CHECK(tokenize_text("a != b , [COL]") == std::vector<std::string>{"a", "!=", "b", ",", "[COL]"});
  CHECK(tokenize_text("").empty());

  Vocabulary v;
  CHECK(v.id("<pad>") == Vocabulary::kPad);
  CHECK(v.id("<bos>") == Vocabulary::kBos);
  CHECK(v.id("<eos>") == Vocabulary::kEos);
  CHECK(v.id("<unk>") == Vocabulary::kUnk);
  CHECK(v.id("<sep>") == Vocabulary::kSep);
  CHECK(v.id("[COL]") == 5);
  CHECK(v.id("never seen") == Vocabulary::kUnk);
  const int x = v.add("x");
  CHECK(v.add("x") == x);
  CHECK(Vocabulary::parse(v.serialize()) == v);

  const auto& stream = testsupport::fixture_stream();
  const auto vocab = build_vocabulary(stream);
  CHECK(vocab.id("singer") != Vocabulary::kUnk);
  CHECK(build_vocabulary(stream) == vocab);
  const auto& s = stream.tasks[0].train[0];
  const auto item = encode(vocab, s.question, s.sql, stream.schema(s.db_id), Source::labeled);
  CHECK(item.target.back() == Vocabulary::kEos);
  CHECK(item.input.size() <= kMaxInputTokens);
  CHECK(item.target.size() <= kMaxTargetTokens);
  CHECK(std::find(item.input.begin(), item.input.end(), Vocabulary::kSep) != item.input.end());
  for (int id : item.input) CHECK(id < vocab.size());
  CHECK(serialize_schema(stream.schema("pets_1")).rfind("student : stu_id , lname", 0) == 0);
}

TEST_CASE("toy model distributions and serialization") {
  ToyModel m(kV, kDim, 3);
  CHECK(m.params().size() == static_cast<std::size_t>(2 * kV * kDim + kV));
  Rng rng(1);
  for (const auto& it : testsupport::random_items(rng, kV, 10, Source::labeled)) {
    const auto d = m.distributions(it.input, it.target);
    REQUIRE(d.size() == it.target.size());
    for (const auto& p : d) {
      double sum = 0.0;
      for (double x : p) {
        CHECK(x >= 0.0);
        sum += x;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
    CHECK(m.distributions(it.input, it.target) == d);
  }
  const auto back = ToyModel::from_json(json::parse(m.to_json().dump()));
  CHECK(back.params() == m.params());
  CHECK(ToyModel(kV, kDim, 3).params() == m.params());
  for (double x : m.params()) CHECK(std::fabs(x) <= 0.1);
  const auto out = m.greedy_decode({5, 6}, 10);
  CHECK(out.size() <= 10);
}

TEST_CASE("cross-entropy values") {
  const std::vector<SeqItem> one = {{{1}, {2, 3, 1}, Source::labeled}};
  CHECK(std::fabs(ce_loss(ToyModel(4, 3, std::vector<double>(2 * 4 * 3 + 4, 0.0)), one) - 3.0 * std::log(4.0)) <
        1e-9);
  CHECK(std::fabs(ce_loss(FixedModel({0.25, 0.25, 0.25, 0.25}), one) - 3.0 * std::log(4.0)) < 1e-9);
  const std::vector<SeqItem> ones = {{{0}, {1, 1}, Source::labeled}};
  CHECK(ce_loss(FixedModel({0.0, 1.0}), ones) == 0.0);

  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    ToyModel m(kV, kDim, 100 + static_cast<std::uint64_t>(trial), 0.5);
    const auto items = testsupport::random_items(rng, kV, 6, Source::labeled);
    CHECK(std::fabs(ce_loss(m, items) - testsupport::ce_oracle(m, items)) < 1e-9);
    CHECK(ce_loss(m, items) >= 0.0);
  }
  CHECK_THROWS(ce_loss(ToyModel(kV, kDim, 1), {}));
}

TEST_CASE("KL values") {
  const std::vector<SeqItem> one = {{{0}, {1}, Source::ske}};
  CHECK(std::fabs(kl_loss(FixedModel({1.0, 0.0}), FixedModel({0.5, 0.5}), one) - std::log(2.0)) < 1e-9);
  ToyModel a(kV, kDim, 1);
  Rng rng(4);
  const auto items = testsupport::random_items(rng, kV, 6, Source::ske);
  CHECK(kl_loss(a, a, items) == 0.0);
  for (int trial = 0; trial < 10; ++trial) {
    ToyModel t(kV, kDim, 200 + static_cast<std::uint64_t>(trial), 0.5), s(kV, kDim, 300 + static_cast<std::uint64_t>(trial), 0.5);
    const double kl = kl_loss(t, s, items);
    CHECK(std::fabs(kl - testsupport::kl_oracle(t, s, items)) < 1e-9);
    CHECK(kl > 0.0);
  }
  CHECK_THROWS(kl_loss(ToyModel(3, 2, 1), ToyModel(4, 2, 1), items));
}

TEST_CASE("total loss composition") {
  LossComponents c{1.0, 2.0, 3.0, 0.5, true};
  CHECK(combine(c, 0.1) == 6.05);
  c.kl_included = false;
  CHECK(combine(c, 0.1) == 6.0);

  ToyModel student(kV, kDim, 1), teacher(kV, kDim, 2);
  const auto b = random_batches(5);
  const auto first = loss_components(student, &teacher, b, 1);
  CHECK_FALSE(first.kl_included);
  CHECK(total_loss(student, &teacher, b, 0.3, 1) == total_loss(student, nullptr, b, 0.3, 1));
  CHECK(loss_components(student, nullptr, b, 2).kl_included == false);
  CHECK(loss_components(student, &teacher, random_batches(5, false), 2).kl_included == false);

  Batches labeled_only;
  labeled_only.labeled = b.labeled;
  CHECK(total_loss(student, &teacher, labeled_only, 0.1, 2) == ce_loss(student, b.labeled));

  const auto comp = loss_components(student, &teacher, b, 2);
  REQUIRE(comp.kl_included);
  const double base = total_loss(student, &teacher, b, 0.0, 2);
  for (double lambda : {0.0, 0.03, 0.05, 0.1, 0.2, 0.3}) {
    const double v = total_loss(student, &teacher, b, lambda, 2);
    CHECK(std::fabs((v - base) - lambda * comp.kl) < 1e-9);
  }
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    ToyModel student(kV, kDim, seed, 0.5), teacher(kV, kDim, seed + 10, 0.5);
    const auto b = random_batches(seed);
    for (int task : {1, 2}) {
      const auto g = total_loss_grad(student, &teacher, b, 0.1, task);
      CHECK(std::fabs(g.value - total_loss(student, &teacher, b, 0.1, task)) < 1e-9);
      const double err = gradient_check(
          student, [&](const SequenceModel& m) { return total_loss(m, &teacher, b, 0.1, task); }, g.grad, 20, seed);
      CHECK(err <= 1e-4);
    }
    const auto kg = kl_loss_grad(teacher, student, b.ske);
    CHECK(gradient_check(student, [&](const SequenceModel& m) { return kl_loss(teacher, m, b.ske); }, kg.grad, 20,
                         seed + 1) <= 1e-4);
  }
}

TEST_CASE("training") {
  const auto b = random_batches(9);
  ToyModel teacher(kV, kDim, 2);
  const auto teacher_hash = sha256_hex(json(teacher.params()).dump());
  TrainConfig cfg;

  ToyModel s1(kV, kDim, 1);
  const auto log = train_task(s1, &teacher, b, 2, cfg);
  CHECK(log.total.size() == static_cast<std::size_t>(cfg.epochs + 1));
  CHECK(log.total.back() < log.total.front());
  CHECK(sha256_hex(json(teacher.params()).dump()) == teacher_hash);

  ToyModel s0(kV, kDim, 1);
  TrainConfig zero = cfg;
  zero.lambda = 0.0;
  train_task(s0, &teacher, b, 2, zero);
  CHECK(s0.params() != s1.params());

  // without pseudo-samples training is plain descent on the labeled loss
  Batches labeled_only;
  labeled_only.labeled = b.labeled;
  ToyModel a(kV, kDim, 1), manual(kV, kDim, 1);
  train_task(a, &teacher, labeled_only, 2, cfg);
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto g = ce_loss_grad(manual, labeled_only.labeled);
    for (std::size_t i = 0; i < manual.params().size(); ++i) manual.params()[i] -= cfg.learning_rate * g.grad[i];
  }
  CHECK(a.params() == manual.params());
}

TEST_CASE("divergence aborts with a state dump") {
  testsupport::TempDir dir("diverge");
  ToyModel s(kV, kDim, 1);
  TrainConfig cfg;
  cfg.learning_rate = 1e308;
  cfg.dump_on_divergence = dir.path() / "dump.json";
  CHECK_THROWS_AS(train_task(s, nullptr, random_batches(3), 1, cfg), DivergenceError);
  CHECK(std::filesystem::exists(dir.path() / "dump.json"));
}

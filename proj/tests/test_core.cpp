#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "collider/core.hpp"

using namespace collider;

TEST_CASE("temperature_softmax matches closed forms") {
  Vector z0 = Vector::Zero(4);
  Vector p0 = temperature_softmax(z0, 1.0);
  for (int i = 0; i < 4; ++i) CHECK(p0(i) == Catch::Approx(0.25));

  Vector z1(2);
  z1 << std::log(2.0), 0.0;
  Vector p1 = temperature_softmax(z1, 1.0);
  CHECK(p1(0) == Catch::Approx(2.0 / 3.0));
  CHECK(p1(1) == Catch::Approx(1.0 / 3.0));

  Vector z2(2);
  z2 << 1.0, 0.0;
  Vector p2 = temperature_softmax(z2, 1e-6);
  CHECK(std::abs(p2(0) - 1.0) < 1e-9);
  CHECK(std::abs(p2(1)) < 1e-9);
}

TEST_CASE("temperature_softmax rejects bad inputs") {
  Vector z = Vector::Zero(3);
  CHECK_THROWS_AS(temperature_softmax(z, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(temperature_softmax(z, -1.0), std::invalid_argument);
  z(1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(temperature_softmax(z, 1.0), std::invalid_argument);
}

TEST_CASE("temperature_softmax simplex/shift/argmax properties") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> logit(0.0, 3.0);
  std::uniform_real_distribution<double> temp(0.05, 4.0);
  std::uniform_real_distribution<double> shift(-10.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng() % 40);
    Vector z(n);
    for (int i = 0; i < n; ++i) z(i) = logit(rng);
    double tau = temp(rng);
    Vector p = temperature_softmax(z, tau);

    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= kSimplexTol);
    CHECK(argmax_index(p) == argmax_index(z));

    Vector shifted = z.array() + shift(rng);
    Vector ps = temperature_softmax(shifted, tau);
    CHECK((p - ps).cwiseAbs().maxCoeff() <= kSimplexTol);
  }
}

TEST_CASE("label_smooth closed forms") {
  Vector a = label_smooth(2, 0.1, 5);
  Vector expect_a(5);
  expect_a << 0.025, 0.025, 0.9, 0.025, 0.025;
  CHECK((a - expect_a).cwiseAbs().maxCoeff() < 1e-12);

  Vector b = label_smooth(0, 0.0, 3);
  CHECK(b(0) == 1.0);
  CHECK(b(1) == 0.0);
  CHECK(b(2) == 0.0);

  Vector c = label_smooth(0, 0.2, 3);
  CHECK(c(0) == Catch::Approx(0.8));
  CHECK(c(1) == Catch::Approx(0.1));
  CHECK(c(2) == Catch::Approx(0.1));

  CHECK_THROWS_AS(label_smooth(5, 0.1, 5), std::invalid_argument);
  CHECK_THROWS_AS(label_smooth(-1, 0.1, 5), std::invalid_argument);
}

TEST_CASE("label_smooth stays interior and log-finite for eps > 0") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng() % 30);
    int id = static_cast<int>(rng() % n);
    double eps = 0.01 + 0.98 * (static_cast<double>(rng() % 1000) / 1000.0);
    Vector v = label_smooth(id, eps, n);
    CHECK(v.minCoeff() > 0.0);
    CHECK(v.maxCoeff() < 1.0);
    CHECK(std::abs(v.sum() - 1.0) < 1e-12);
    CHECK(v.array().log().matrix().allFinite());
  }
}

TEST_CASE("top_k ordering and tie rule") {
  Vector v(3);
  v << 0.1, 0.9, 0.5;
  auto r = top_k(v, 2);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == std::pair<int, double>{1, 0.9});
  CHECK(r[1] == std::pair<int, double>{2, 0.5});

  Vector ties(3);
  ties << 3.0, 3.0, 1.0;
  auto rt = top_k(ties, 2);
  CHECK(rt[0].first == 0);
  CHECK(rt[1].first == 1);

  Vector full(4);
  full << -1.0, 5.0, 2.0, 2.0;
  auto rf = top_k(full, 4);
  CHECK(rf[0].first == 1);
  CHECK(rf[1].first == 2);  // tie with index 3, lower index wins
  CHECK(rf[2].first == 3);
  CHECK(rf[3].first == 0);

  CHECK_THROWS_AS(top_k(v, 4), std::invalid_argument);
  CHECK_THROWS_AS(top_k(v, 0), std::invalid_argument);
}

TEST_CASE("soft sequence renormalizes, strict mode rejects") {
  Matrix m(2, 3);
  m << 2.0, 2.0, 0.0, 0.0, 0.0, 5.0;
  auto s = SoftSequence::from_rows(m);
  CHECK(s.rows(0, 0) == Catch::Approx(0.5));
  CHECK(s.rows(1, 2) == Catch::Approx(1.0));
  CHECK_THROWS_AS(SoftSequence::from_rows(m, /*strict=*/true),
                  std::invalid_argument);

  Matrix bad(1, 2);
  bad << -0.5, 1.5;
  CHECK_THROWS_AS(SoftSequence::from_rows(bad), std::invalid_argument);
}

TEST_CASE("vocabulary round trip with frequency ranks") {
  auto vocab = Vocabulary::from_tokens({"<s>", "the", "cat", "sat"}, 0, 0,
                                       {4, 1, 2, 3});
  CHECK(vocab.size() == 4);
  CHECK(vocab.id("cat").value() == 2);
  CHECK_FALSE(vocab.id("dog").has_value());
  CHECK(vocab.frequency_rank(1) == 1);
  auto top2 = vocab.top_frequent(2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0] == 1);
  CHECK(top2[1] == 2);

  auto path = std::string("/tmp/collider_vocab_test.txt");
  vocab.save(path);
  auto loaded = Vocabulary::load(path);
  CHECK(loaded.size() == vocab.size());
  CHECK(loaded.hash() == vocab.hash());
  CHECK(loaded.frequency_rank(3) == 3);

  CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "a"}),
                  std::invalid_argument);
}

TEST_CASE("attack config presets and validation") {
  auto aggr = AttackConfig::preset(TaskKind::Paraphrase, AttackKind::Aggressive);
  CHECK(aggr.beam_size == 10);
  CHECK(aggr.topk == 30);
  CHECK(aggr.iters == 30);
  CHECK(aggr.length == 20);
  CHECK(aggr.step_size == Catch::Approx(0.001));
  CHECK(aggr.temperature == Catch::Approx(1.0));
  CHECK(aggr.lm_weight == 0.0);
  CHECK(aggr.label_smoothing == Catch::Approx(0.1));

  auto reg = AttackConfig::preset(TaskKind::Retrieval, AttackKind::Regularized);
  CHECK(reg.lm_weight == Catch::Approx(0.85));
  CHECK(reg.length == 60);
  REQUIRE(reg.span.has_value());
  CHECK(reg.span->start == 30);

  auto nat = AttackConfig::preset(TaskKind::Response, AttackKind::Natural);
  CHECK(nat.topk == 128);
  CHECK(nat.iters == 5);
  CHECK(nat.temperature == Catch::Approx(0.1));
  CHECK(nat.lm_weight == Catch::Approx(0.15));

  AttackConfig c;
  c.topk = 1000;
  CHECK_THROWS_AS(c.validate(100), std::invalid_argument);
  c = AttackConfig{};
  c.lm_weight = 1.5;
  CHECK_THROWS_AS(c.validate(100), std::invalid_argument);
  c = AttackConfig{};
  c.span = DegenerationSpan{c.length, 100};
  CHECK_THROWS_AS(c.validate(100), std::invalid_argument);
}

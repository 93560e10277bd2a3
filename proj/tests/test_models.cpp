#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "collider/models.hpp"
#include "collider/toy_models.hpp"
#include "fixtures.hpp"

using namespace collider;

namespace {

// Dual encoder frozen to the same unit vector for any input.
class FrozenDualScorer final : public SimilarityScorer {
 public:
  explicit FrozenDualScorer(int vocab) : emb_(Matrix::Zero(vocab, 3)) {
    u_ = RowVector::Zero(3);
    u_(0) = 0.6;
    u_(1) = 0.8;  // unit norm
  }
  Kind kind() const override { return Kind::DualEncoder; }
  int vocab_size() const override { return static_cast<int>(emb_.rows()); }
  int max_len() const override { return 1 << 20; }
  const Matrix& embeddings() const override { return emb_; }
  double score(const TokenSequence& x, const MixedSequence& c) const override {
    check_scorable(*this, x, c);
    return u_.dot(u_);
  }
  double score_with_soft_grad(const TokenSequence& x, const MixedSequence& c,
                              Matrix* g) const override {
    if (g) *g = Matrix::Zero(c.soft ? c.soft->length() : 0, vocab_size());
    return score(x, c);
  }
  Matrix embed_grad(const TokenSequence&,
                    const TokenSequence& c) const override {
    return Matrix::Zero(c.length(), 3);
  }

 private:
  Matrix emb_;
  RowVector u_;
};

SoftSequence raw_soft(Matrix rows) {
  SoftSequence s;
  s.rows = std::move(rows);
  return s;
}

}  // namespace

TEST_CASE("soft_embed closed forms") {
  auto scorer = RiggedScorer::embedding_dot(0, Matrix::Identity(2, 2));
  Matrix rows(1, 2);
  rows << 0.5, 0.5;
  Matrix avg = soft_embed(SoftSequence::from_rows(rows), scorer);
  CHECK(avg(0, 0) == Catch::Approx(0.5));
  CHECK(avg(0, 1) == Catch::Approx(0.5));

  rows << 0.2, 0.8;
  avg = soft_embed(SoftSequence::from_rows(rows), scorer);
  CHECK(avg(0, 0) == Catch::Approx(0.2));
  CHECK(avg(0, 1) == Catch::Approx(0.8));

  // one-hot row reproduces the embedding row exactly
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  Matrix emb(5, 4);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) emb(i, j) = d(rng);
  auto s2 = RiggedScorer::embedding_dot(3, emb);
  auto onehot = SoftSequence::one_hot(TokenSequence{{3}}, 5);
  CHECK((soft_embed(onehot, s2).row(0) - emb.row(3)).cwiseAbs().maxCoeff() ==
        0.0);

  Matrix bad(1, 3);
  bad << 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(soft_embed(SoftSequence::from_rows(bad), s2),
                  std::invalid_argument);
}

TEST_CASE("rigged scorer closed forms") {
  auto scorer = RiggedScorer::soft_count(/*target=*/2, /*vocab=*/5);
  TokenSequence x{{0, 1}};
  CHECK(score_hard(scorer, x, TokenSequence{{2, 2, 2}}) == 3.0);

  Matrix rows = Matrix::Zero(4, 5);
  for (int t = 0; t < 4; ++t) {
    rows(t, 2) = 0.5;
    rows(t, 0) = 0.5;
  }
  CHECK(score_soft(scorer, x, SoftSequence::from_rows(rows)) ==
        Catch::Approx(2.0));

  Matrix grad;
  scorer.score_with_soft_grad(
      x, MixedSequence::all_soft(SoftSequence::from_rows(rows)), &grad);
  REQUIRE(grad.rows() == 4);
  for (int t = 0; t < 4; ++t) {
    CHECK(grad(t, 2) == 1.0);
    CHECK(grad.row(t).sum() == 1.0);  // one-hot shaped
  }
}

TEST_CASE("frozen dual encoder scores 1.0") {
  FrozenDualScorer scorer(6);
  CHECK(score_hard(scorer, TokenSequence{{1}}, TokenSequence{{2, 3}}) ==
        Catch::Approx(1.0));
}

TEST_CASE("score_partial degenerate and mixed cases") {
  auto scorer = RiggedScorer::soft_count(1, 4);
  TokenSequence x{{0}};
  TokenSequence c{{1, 1, 3}};
  CHECK(score_partial(scorer, x, c) == score_hard(scorer, x, c));

  Matrix rows(2, 4);
  rows << 0.1, 0.6, 0.2, 0.1, 0.25, 0.25, 0.25, 0.25;
  auto soft = SoftSequence::from_rows(rows);
  CHECK(score_partial(scorer, x, TokenSequence{}, soft) ==
        Catch::Approx(score_soft(scorer, x, soft)));

  Matrix one(1, 4);
  one << 0.7, 0.3, 0.0, 0.0;
  CHECK(score_partial(scorer, x, TokenSequence{{1}},
                      SoftSequence::from_rows(one)) == Catch::Approx(1.3));
}

TEST_CASE("soft/hard consistency for trained scorers") {
  std::mt19937_64 rng(21);
  const auto& vocab = fixtures::gen().vocab();
  for (const SimilarityScorer* scorer :
       {static_cast<const SimilarityScorer*>(&fixtures::concat_scorer()),
        static_cast<const SimilarityScorer*>(&fixtures::dual_scorer())}) {
    for (int trial = 0; trial < 12; ++trial) {
      int topic = static_cast<int>(rng() % 10);
      TokenSequence x = fixtures::gen().sentence(topic, rng);
      TokenSequence c =
          fixtures::gen().sentence(static_cast<int>(rng() % 10), rng);
      double hard = score_hard(*scorer, x, c);
      double soft =
          score_soft(*scorer, x, SoftSequence::one_hot(c, vocab.size()));
      CHECK(std::abs(hard - soft) <= 1e-5);
    }
  }
}

TEST_CASE("trained concat scorer separates its own training pair") {
  const auto& pairs = fixtures::train_pairs();
  const auto& scorer = fixtures::concat_scorer();
  // first related pair from the training set
  for (const auto& p : pairs) {
    if (p.label == 1) {
      CHECK(score_hard(scorer, p.a, p.b) > 0.5);
      break;
    }
  }
  CHECK(scorer.train_report().metric == "heldout_accuracy");
  CHECK(scorer.train_report().value >= 0.9);
}

TEST_CASE("dual encoder ranks the related candidate among 10") {
  const auto& scorer = fixtures::dual_scorer();
  CHECK(scorer.train_report().value >= 0.85);

  // ranking accuracy with nine cross-topic distractors
  std::mt19937_64 rng(23);
  int hits = 0;
  const int trials = 100;
  for (int i = 0; i < trials; ++i) {
    int topic = static_cast<int>(rng() % 10);
    TokenSequence context = fixtures::gen().sentence(topic, rng);
    double gold = score_hard(scorer, context,
                             fixtures::gen().sentence(topic, rng));
    bool top = true;
    for (int d = 0; d < 9; ++d) {
      int other = static_cast<int>(rng() % 10);
      while (other == topic) other = static_cast<int>(rng() % 10);
      if (score_hard(scorer, context,
                     fixtures::gen().sentence(other, rng)) >= gold)
        top = false;
    }
    hits += top;
  }
  CHECK(static_cast<double>(hits) / trials >= 0.85);
}

TEST_CASE("similarity training is deterministic and rejects one-class data") {
  std::mt19937_64 rng(31);
  auto pairs = fixtures::gen().pairs(160, rng);
  auto a = train_toy_similarity(fixtures::gen().vocab(), pairs,
                                SimilarityScorer::Kind::Concat, 8, 2, 99);
  auto b = train_toy_similarity(fixtures::gen().vocab(), pairs,
                                SimilarityScorer::Kind::Concat, 8, 2, 99);
  CHECK((a.enc.E - b.enc.E).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.w_out - b.w_out).cwiseAbs().maxCoeff() == 0.0);

  std::vector<LabeledPair> one_class(pairs.begin(), pairs.begin() + 10);
  for (auto& p : one_class) p.label = 1;
  CHECK_THROWS_AS(
      train_toy_similarity(fixtures::gen().vocab(), one_class,
                           SimilarityScorer::Kind::Concat, 8, 1, 1),
      TrainingFailure);
}

TEST_CASE("score gradients match central finite differences") {
  std::mt19937_64 rng(41);
  const auto& vocab = fixtures::gen().vocab();
  TokenSequence x = fixtures::gen().sentence(2, rng);

  for (const SimilarityScorer* scorer :
       {static_cast<const SimilarityScorer*>(&fixtures::concat_scorer()),
        static_cast<const SimilarityScorer*>(&fixtures::dual_scorer())}) {
    // random interior soft rows
    Matrix rows(4, vocab.size());
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (int t = 0; t < 4; ++t) {
      for (int v = 0; v < vocab.size(); ++v) rows(t, v) = u(rng);
      rows.row(t) /= rows.row(t).sum();
    }
    MixedSequence mixed = MixedSequence::all_soft(raw_soft(rows));
    Matrix grad;
    scorer->score_with_soft_grad(x, mixed, &grad);

    const double step = 1e-4;
    for (int check = 0; check < 30; ++check) {
      int t = static_cast<int>(rng() % 4);
      int v = static_cast<int>(rng() % vocab.size());
      auto eval = [&](double delta) {
        Matrix shifted = rows;
        shifted(t, v) += delta;
        return scorer->score_with_soft_grad(
            x, MixedSequence::all_soft(raw_soft(shifted)), nullptr);
      };
      double fd = (eval(step) - eval(-step)) / (2.0 * step);
      double ana = grad(t, v);
      double denom = std::max({std::abs(fd), std::abs(ana), 1e-8});
      CHECK(std::abs(fd - ana) / denom <= 1e-3);
    }
  }
}

TEST_CASE("table LM closed forms") {
  auto uniform = TableLM::uniform(10, 0);
  TokenSequence prefix{{0}};
  Vector logits = uniform.next_logits(prefix);
  CHECK((logits.array() - logits(0)).abs().maxCoeff() < 1e-12);

  // softmax normalization of next_logits
  Vector probs = temperature_softmax(logits, 1.0);
  CHECK(std::abs(probs.sum() - 1.0) < 1e-6);

  CHECK(sequence_log_prob(uniform, TokenSequence{{1, 2, 3}}) ==
        Catch::Approx(3.0 * std::log(0.1)));
  CHECK(perplexity(uniform, TokenSequence{{4, 5, 6, 7}}) ==
        Catch::Approx(10.0).epsilon(1e-9));

  // chain 0 -> 1 -> 2 -> 0
  auto chain = TableLM::chain({1, 2, 0}, 0);
  CHECK(argmax_index(chain.next_logits(TokenSequence{{0}})) == 1);
  CHECK(argmax_index(chain.next_logits(TokenSequence{{0, 1}})) == 2);
  CHECK(sequence_log_prob(chain, TokenSequence{{1, 2, 0}}) == 0.0);
  CHECK(perplexity(chain, TokenSequence{{1, 2, 0, 1}}) == Catch::Approx(1.0));
  // off-chain token has probability zero
  CHECK(sequence_log_prob(chain, TokenSequence{{2}}) ==
        -std::numeric_limits<double>::infinity());
  CHECK(perplexity(chain, TokenSequence{{2}}) ==
        std::numeric_limits<double>::infinity());

  // per-token probability 0.5 throughout -> perplexity 2
  Matrix half(2, 2);
  half << 0.5, 0.5, 0.5, 0.5;
  TableLM halves(half, 0);
  CHECK(perplexity(halves, TokenSequence{{0, 1, 1, 0}}) == Catch::Approx(2.0));

  // hand-multiplied mixed case
  Matrix t(3, 3);
  t << 0.5, 0.3, 0.2, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4;
  TableLM mixed(t, 0);
  // P(1|0) * P(2|1) * P(1|2) = 0.3 * 0.1 * 0.3 = 0.009
  CHECK(sequence_log_prob(mixed, TokenSequence{{1, 2, 1}}) ==
        Catch::Approx(std::log(0.009)));
}

TEST_CASE("soft_next_nll closed forms and gradients") {
  auto uniform = TableLM::uniform(10, 0);
  Matrix empty(0, 10);
  Vector onehot = Vector::Zero(10);
  onehot(4) = 1.0;
  CHECK(uniform.soft_next_nll(empty, onehot, nullptr, nullptr) ==
        Catch::Approx(std::log(10.0)));

  // chain: on-chain one-hot prefix, target = forced successor
  auto chain = TableLM::chain({1, 2, 0}, 0);
  Matrix prefix = Matrix::Zero(1, 3);
  prefix(0, 1) = 1.0;  // prefix token 1, successor 2
  Vector target = Vector::Zero(3);
  target(2) = 1.0;
  CHECK(chain.soft_next_nll(prefix, target, nullptr, nullptr) ==
        Catch::Approx(0.0).margin(1e-9));

  // H(p, p) equals the entropy of p
  Matrix t(3, 3);
  t << 0.5, 0.3, 0.2, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4;
  TableLM mixed(t, 0);
  Matrix pre = Matrix::Zero(1, 3);
  pre(0, 0) = 1.0;
  Vector p = t.row(0).transpose();
  double entropy = -(p.array() * p.array().log()).sum();
  CHECK(mixed.soft_next_nll(pre, p, nullptr, nullptr) ==
        Catch::Approx(entropy));

  // gradient vs finite differences, for both table and neural LMs
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  const CausalLM* lms[] = {&mixed,
                           static_cast<const CausalLM*>(&fixtures::lm())};
  for (const CausalLM* lm : lms) {
    const int vs = lm->vocab_size();
    Matrix soft(2, vs);
    Vector tgt(vs);
    for (int v = 0; v < vs; ++v) {
      soft(0, v) = u(rng);
      soft(1, v) = u(rng);
      tgt(v) = u(rng);
    }
    soft.row(0) /= soft.row(0).sum();
    soft.row(1) /= soft.row(1).sum();
    tgt /= tgt.sum();

    Matrix grad_prefix;
    Vector grad_target;
    lm->soft_next_nll(soft, tgt, &grad_prefix, &grad_target);
    const double step = 1e-4;
    for (int check = 0; check < 20; ++check) {
      int v = static_cast<int>(rng() % vs);
      Matrix sp = soft, sm = soft;
      sp(1, v) += step;
      sm(1, v) -= step;
      double fd = (lm->soft_next_nll(sp, tgt, nullptr, nullptr) -
                   lm->soft_next_nll(sm, tgt, nullptr, nullptr)) /
                  (2.0 * step);
      double ana = grad_prefix(1, v);
      double denom = std::max({std::abs(fd), std::abs(ana), 1e-8});
      CHECK(std::abs(fd - ana) / denom <= 1e-3);

      Vector tp = tgt, tm = tgt;
      tp(v) += step;
      tm(v) -= step;
      double fdt = (lm->soft_next_nll(soft, tp, nullptr, nullptr) -
                    lm->soft_next_nll(soft, tm, nullptr, nullptr)) /
                   (2.0 * step);
      double anat = grad_target(v);
      double denomt = std::max({std::abs(fdt), std::abs(anat), 1e-8});
      CHECK(std::abs(fdt - anat) / denomt <= 1e-3);
    }
  }
}

TEST_CASE("trained bigram LM beats uniform and stays normalized") {
  const auto& lm = fixtures::lm();
  const auto& vocab = fixtures::gen().vocab();
  CHECK(lm.train_report().metric == "heldout_perplexity");
  CHECK(lm.train_report().value < vocab.size());

  // LM normalization over random prefixes
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    TokenSequence prefix{{vocab.start_id()}};
    int extra = static_cast<int>(rng() % 4);
    for (int i = 0; i < extra; ++i)
      prefix.ids.push_back(static_cast<int>(rng() % vocab.size()));
    Vector probs = temperature_softmax(lm.next_logits(prefix), 1.0);
    CHECK(std::abs(probs.sum() - 1.0) <= 1e-6);
  }
}

TEST_CASE("LM trained on repeated template learns the continuation") {
  auto vocab = Vocabulary::from_tokens({"<s>", "u", "v", "w", "z"}, 0, 0);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < 300; ++i) {
    corpus.push_back(TokenSequence{{1, 2, 3, 1, 2, 3}});
    if (i % 10 == 0) corpus.push_back(TokenSequence{{4, 4}});
  }
  auto lm = train_toy_lm(vocab, corpus, 8, 12, 3);
  // frequent bigram head "u" is almost always followed by "v"
  CHECK(argmax_index(lm.next_logits(TokenSequence{{0, 1}})) == 2);
  CHECK(argmax_index(lm.next_logits(TokenSequence{{0, 1, 2}})) == 3);
  CHECK(lm.train_report().value < 0.5 * vocab.size());

  auto lm2 = train_toy_lm(vocab, corpus, 8, 12, 3);
  CHECK((lm.E - lm2.E).cwiseAbs().maxCoeff() == 0.0);

  // chain corpus: perplexity on the chain approaches 1
  std::vector<TokenSequence> chain_corpus(
      200, TokenSequence{{1, 2, 3, 4, 1, 2, 3, 4}});
  auto chain_lm = train_toy_lm(vocab, chain_corpus, 8, 20, 3);
  CHECK(perplexity(chain_lm, TokenSequence{{1, 2, 3, 4, 1, 2, 3, 4}}) < 1.5);
}

TEST_CASE("checkpoints round trip and verify the vocabulary hash") {
  const auto& scorer = fixtures::concat_scorer();
  const auto& vocab = fixtures::gen().vocab();
  save_scorer(scorer, "/tmp/collider_scorer_ckpt.json");
  auto loaded = load_scorer("/tmp/collider_scorer_ckpt.json", vocab);
  CHECK(loaded.head == scorer.head);
  CHECK((loaded.enc.E - scorer.enc.E).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.train_report().value == scorer.train_report().value);

  std::mt19937_64 rng(9);
  TokenSequence x = fixtures::gen().sentence(0, rng);
  TokenSequence c = fixtures::gen().sentence(1, rng);
  CHECK(score_hard(loaded, x, c) == score_hard(scorer, x, c));

  auto other_vocab = Vocabulary::from_tokens({"a", "b"}, 0, 0);
  CHECK_THROWS_AS(load_scorer("/tmp/collider_scorer_ckpt.json", other_vocab),
                  VocabularyMismatch);

  save_lm(fixtures::lm(), "/tmp/collider_lm_ckpt.json");
  auto lm_loaded = load_lm("/tmp/collider_lm_ckpt.json", vocab);
  CHECK((lm_loaded.E - fixtures::lm().E).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(load_lm("/tmp/collider_lm_ckpt.json", other_vocab),
                  VocabularyMismatch);
}

TEST_CASE("length limits are enforced") {
  const auto& scorer = fixtures::concat_scorer();
  TokenSequence x{{2}};
  TokenSequence longc(std::vector<int>(200, 2));
  CHECK_THROWS_AS(score_hard(scorer, x, longc), std::invalid_argument);
}

// Victim-model contracts plus the analytic instances used as oracles: a
// rigged linear scorer with a closed-form optimum and a table-driven causal
// LM (uniform and deterministic-chain variants).
//
// Similarity scorers accept "mixed" collision inputs: a hard token prefix
// followed by an optional block of soft rows. Hard tokens embed exactly as
// their embedding row; soft rows embed as the probability-weighted average of
// embedding rows.
#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "collider/core.hpp"

namespace collider {

/// Hard prefix followed by an optional soft block; covers fully-hard,
/// fully-soft, and beam-projection partial inputs.
struct MixedSequence {
  TokenSequence prefix;
  std::optional<SoftSequence> soft;

  static MixedSequence hard(TokenSequence seq) {
    return MixedSequence{std::move(seq), std::nullopt};
  }
  static MixedSequence all_soft(SoftSequence s) {
    return MixedSequence{TokenSequence{}, std::move(s)};
  }

  int length() const {
    return prefix.length() + (soft ? soft->length() : 0);
  }
};

class SimilarityScorer {
 public:
  enum class Kind { Concat, DualEncoder };

  virtual ~SimilarityScorer() = default;

  virtual Kind kind() const = 0;
  virtual int vocab_size() const = 0;
  virtual int max_len() const = 0;
  virtual const Matrix& embeddings() const = 0;

  /// Task-space similarity: sigmoid probability for concat scorers, pooled
  /// dot product for dual encoders.
  virtual double score(const TokenSequence& x, const MixedSequence& c) const = 0;

  /// Same forward, but also fills the gradient with respect to the soft rows
  /// of `c`. Concat scorers differentiate the pre-sigmoid logit (monotone in
  /// the reported score, numerically better behaved); the returned value is
  /// the objective that was differentiated.
  virtual double score_with_soft_grad(const TokenSequence& x,
                                      const MixedSequence& c,
                                      Matrix* grad_soft) const = 0;

  /// Gradient of the optimization objective with respect to the embedded
  /// input vectors of `c` (one row per position). Drives hotflip's
  /// first-order flip ranking.
  virtual Matrix embed_grad(const TokenSequence& x,
                            const TokenSequence& c) const = 0;

  /// Per-token contextual representations used by the unrelatedness proxy.
  /// Plain embedding rows unless the model has an encoder to offer.
  virtual Matrix contextual_states(const TokenSequence& seq) const {
    seq.check_in_range(vocab_size());
    Matrix out(seq.length(), embeddings().cols());
    for (int t = 0; t < seq.length(); ++t)
      out.row(t) = embeddings().row(seq.ids[t]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Free scoring ops

/// Probability-weighted average of embedding rows, one output row per soft
/// position.
inline Matrix soft_embed(const SoftSequence& soft,
                         const SimilarityScorer& scorer) {
  if (soft.vocab_size() != scorer.vocab_size())
    throw std::invalid_argument("soft row dimension != |V|");
  return soft.rows * scorer.embeddings();
}

inline void check_scorable(const SimilarityScorer& scorer,
                           const TokenSequence& x, const MixedSequence& c) {
  if (x.empty() || c.length() == 0)
    throw std::invalid_argument("sequences must be non-empty");
  x.check_in_range(scorer.vocab_size());
  c.prefix.check_in_range(scorer.vocab_size());
  if (c.soft && c.soft->vocab_size() != scorer.vocab_size())
    throw std::invalid_argument("soft row dimension != |V|");
  if (x.length() + c.length() > scorer.max_len())
    throw std::invalid_argument("sequence exceeds model maximum length");
}

inline double score_hard(const SimilarityScorer& scorer, const TokenSequence& x,
                         const TokenSequence& c) {
  return scorer.score(x, MixedSequence::hard(c));
}

inline double score_soft(const SimilarityScorer& scorer, const TokenSequence& x,
                         const SoftSequence& soft) {
  return scorer.score(x, MixedSequence::all_soft(soft));
}

inline double score_partial(const SimilarityScorer& scorer,
                            const TokenSequence& x, const TokenSequence& prefix,
                            const SoftSequence& suffix) {
  return scorer.score(x, MixedSequence{prefix, suffix});
}

inline double score_partial(const SimilarityScorer& scorer,
                            const TokenSequence& x,
                            const TokenSequence& prefix) {
  return scorer.score(x, MixedSequence::hard(prefix));
}

// ---------------------------------------------------------------------------
// Rigged scorer

/// Linear oracle scorer: score(x, c) = sum_t embed(c_t) . direction, a closed
/// form the attack suites can solve exactly.
///   soft-count(a):     identity embeddings, direction = e_a, so the score is
///                      the total probability mass assigned to token a.
///   embedding-dot(a):  supplied embedding table, direction = row a.
class RiggedScorer final : public SimilarityScorer {
 public:
  enum class Mode { SoftCount, EmbeddingDot };

  static RiggedScorer soft_count(int target_id, int vocab_size) {
    RiggedScorer s;
    s.mode_ = Mode::SoftCount;
    s.target_id_ = target_id;
    s.embeddings_ = Matrix::Identity(vocab_size, vocab_size);
    s.direction_ = Vector::Zero(vocab_size);
    s.direction_(target_id) = 1.0;
    return s;
  }

  static RiggedScorer embedding_dot(int target_id, Matrix embeddings) {
    RiggedScorer s;
    s.mode_ = Mode::EmbeddingDot;
    s.target_id_ = target_id;
    s.direction_ = embeddings.row(target_id).transpose();
    s.embeddings_ = std::move(embeddings);
    return s;
  }

  Mode mode() const { return mode_; }
  int target_id() const { return target_id_; }

  Kind kind() const override { return Kind::Concat; }
  int vocab_size() const override {
    return static_cast<int>(embeddings_.rows());
  }
  int max_len() const override { return 1 << 20; }
  const Matrix& embeddings() const override { return embeddings_; }

  double score(const TokenSequence& x, const MixedSequence& c) const override {
    check_scorable(*this, x, c);
    double total = 0.0;
    for (int id : c.prefix.ids) total += embeddings_.row(id).dot(direction_);
    if (c.soft) total += ((c.soft->rows * embeddings_) * direction_).sum();
    return total;
  }

  double score_with_soft_grad(const TokenSequence& x, const MixedSequence& c,
                              Matrix* grad_soft) const override {
    if (!c.soft) throw std::invalid_argument("no soft rows to differentiate");
    double value = score(x, c);
    if (grad_soft) {
      RowVector per_row = (embeddings_ * direction_).transpose();
      *grad_soft = per_row.replicate(c.soft->length(), 1);
    }
    return value;
  }

  Matrix embed_grad(const TokenSequence& x,
                    const TokenSequence& c) const override {
    check_scorable(*this, x, MixedSequence::hard(c));
    return direction_.transpose().replicate(c.length(), 1);
  }

 private:
  Mode mode_ = Mode::SoftCount;
  int target_id_ = 0;
  Matrix embeddings_;
  Vector direction_;
};

/// Scorer that returns the same value for every input; useful for no-op and
/// transfer edge cases.
class ConstantScorer final : public SimilarityScorer {
 public:
  ConstantScorer(double value, int vocab_size, int h = 4)
      : value_(value), embeddings_(Matrix::Zero(vocab_size, h)) {}

  Kind kind() const override { return Kind::Concat; }
  int vocab_size() const override {
    return static_cast<int>(embeddings_.rows());
  }
  int max_len() const override { return 1 << 20; }
  const Matrix& embeddings() const override { return embeddings_; }

  double score(const TokenSequence& x, const MixedSequence& c) const override {
    check_scorable(*this, x, c);
    return value_;
  }
  double score_with_soft_grad(const TokenSequence& x, const MixedSequence& c,
                              Matrix* grad_soft) const override {
    if (grad_soft)
      *grad_soft = Matrix::Zero(c.soft ? c.soft->length() : 0, vocab_size());
    return score(x, c);
  }
  Matrix embed_grad(const TokenSequence&,
                    const TokenSequence& c) const override {
    return Matrix::Zero(c.length(), embeddings_.cols());
  }

 private:
  double value_;
  Matrix embeddings_;
};

// ---------------------------------------------------------------------------
// Causal language models

class CausalLM {
 public:
  virtual ~CausalLM() = default;

  virtual int vocab_size() const = 0;
  virtual int start_id() const = 0;

  /// Next-token logits given a non-empty hard prefix (which by convention
  /// begins with the start token). softmax of the result is the model's
  /// next-token distribution.
  virtual Vector next_logits(const TokenSequence& prefix) const = 0;

  /// log P(token | prefix). Default goes through next_logits; models with
  /// exact zero-probability transitions override to return -inf.
  virtual double next_log_prob(const TokenSequence& prefix, int token) const {
    Vector logits = next_logits(prefix);
    double m = logits.maxCoeff();
    double lse = m + std::log((logits.array() - m).exp().sum());
    return logits(token) - lse;
  }

  /// Cross entropy H(target, P(. | soft prefix)) with the prefix fed as
  /// embedding-averaged soft rows (0 rows = condition on the start token
  /// alone). Probabilities are floored at 1e-12: this is the attack-objective
  /// path, which must stay finite. Optionally fills gradients with respect to
  /// the soft prefix rows and the target row.
  virtual double soft_next_nll(const Matrix& soft_prefix_rows,
                               const Vector& target, Matrix* grad_prefix,
                               Vector* grad_target) const = 0;
};

inline double soft_next_nll(const CausalLM& lm, const SoftSequence& prefix,
                            const Vector& target) {
  return lm.soft_next_nll(prefix.rows, target, nullptr, nullptr);
}

/// Sum of stepwise log probabilities; -inf when any step has an exact zero.
inline double sequence_log_prob(const CausalLM& lm, const TokenSequence& seq) {
  if (seq.empty()) throw std::invalid_argument("empty sequence");
  seq.check_in_range(lm.vocab_size());
  TokenSequence prefix{{lm.start_id()}};
  double total = 0.0;
  for (int id : seq.ids) {
    double lp = lm.next_log_prob(prefix, id);
    if (lp == -std::numeric_limits<double>::infinity())
      return -std::numeric_limits<double>::infinity();
    total += lp;
    prefix.ids.push_back(id);
  }
  return total;
}

/// exp(mean per-token NLL); +inf when the sequence has probability zero.
inline double perplexity(const CausalLM& lm, const TokenSequence& seq) {
  double lp = sequence_log_prob(lm, seq);
  if (lp == -std::numeric_limits<double>::infinity())
    return std::numeric_limits<double>::infinity();
  return std::exp(-lp / seq.length());
}

/// Explicit first-order Markov LM: row-stochastic transition table, next
/// token conditioned on the previous one. Soft prefixes mix table rows.
class TableLM final : public CausalLM {
 public:
  TableLM(Matrix transitions, int start_id)
      : table_(std::move(transitions)), start_id_(start_id) {
    if (table_.rows() != table_.cols())
      throw std::invalid_argument("transition table must be square");
    for (Eigen::Index r = 0; r < table_.rows(); ++r) {
      double s = table_.row(r).sum();
      if (std::abs(s - 1.0) > 1e-9 || table_.row(r).minCoeff() < 0.0)
        throw std::invalid_argument("transition rows must be distributions");
    }
  }

  static TableLM uniform(int vocab_size, int start_id) {
    return TableLM(
        Matrix::Constant(vocab_size, vocab_size, 1.0 / vocab_size), start_id);
  }

  /// Deterministic chain: token i forces successor[i] with probability 1.
  static TableLM chain(const std::vector<int>& successor, int start_id) {
    const int n = static_cast<int>(successor.size());
    Matrix t = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) t(i, successor[i]) = 1.0;
    return TableLM(std::move(t), start_id);
  }

  int vocab_size() const override { return static_cast<int>(table_.rows()); }
  int start_id() const override { return start_id_; }

  Vector next_logits(const TokenSequence& prefix) const override {
    // Floored log keeps the logits finite; softmax still reproduces the
    // table row to double precision.
    return prob_row(prefix).array().max(1e-300).log();
  }

  double next_log_prob(const TokenSequence& prefix, int token) const override {
    double p = prob_row(prefix)(token);
    return p > 0.0 ? std::log(p)
                   : -std::numeric_limits<double>::infinity();
  }

  double soft_next_nll(const Matrix& soft_prefix_rows, const Vector& target,
                       Matrix* grad_prefix, Vector* grad_target) const override {
    static constexpr double kFloor = 1e-12;
    if (target.size() != vocab_size())
      throw std::invalid_argument("target dimension != |V|");
    Vector p;
    if (soft_prefix_rows.rows() == 0) {
      p = table_.row(start_id_).transpose();
    } else {
      if (soft_prefix_rows.cols() != vocab_size())
        throw std::invalid_argument("soft prefix dimension != |V|");
      p = table_.transpose() * soft_prefix_rows.row(soft_prefix_rows.rows() - 1)
                                   .transpose();
    }
    double nll = 0.0;
    for (int w = 0; w < vocab_size(); ++w)
      nll -= target(w) * std::log(std::max(p(w), kFloor));
    if (grad_target) *grad_target = -p.array().max(kFloor).log().matrix();
    if (grad_prefix) {
      *grad_prefix = Matrix::Zero(soft_prefix_rows.rows(), vocab_size());
      if (soft_prefix_rows.rows() > 0) {
        Vector coeff = Vector::Zero(vocab_size());
        for (int w = 0; w < vocab_size(); ++w)
          if (p(w) > kFloor) coeff(w) = target(w) / p(w);
        grad_prefix->row(grad_prefix->rows() - 1) =
            -(table_ * coeff).transpose();
      }
    }
    return nll;
  }

  const Matrix& transitions() const { return table_; }

 private:
  Vector prob_row(const TokenSequence& prefix) const {
    if (prefix.empty()) throw std::invalid_argument("empty prefix");
    prefix.check_in_range(vocab_size());
    return table_.row(prefix.ids.back()).transpose();
  }

  Matrix table_;
  int start_id_;
};

}  // namespace collider

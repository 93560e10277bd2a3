// The four collision-generation algorithms and the unrelatedness vocabulary
// filter. All attacks are deterministic for a fixed config: tie-breaking is
// by (beam index, token id) everywhere and no RNG is consumed.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "collider/core.hpp"
#include "collider/models.hpp"
#include "collider/optim.hpp"

namespace collider {

// ---------------------------------------------------------------------------
// Forbidden set

/// Token ids excluded from collision positions.
class ForbiddenSet {
 public:
  explicit ForbiddenSet(int vocab_size) : mask_(vocab_size, 0) {}

  static ForbiddenSet none(int vocab_size) { return ForbiddenSet(vocab_size); }

  static ForbiddenSet of(const std::vector<int>& ids, int vocab_size) {
    ForbiddenSet f(vocab_size);
    for (int id : ids) f.add(id);
    return f;
  }

  void add(int id) {
    if (id < 0 || id >= static_cast<int>(mask_.size()))
      throw std::invalid_argument("forbidden id out of range");
    mask_[id] = 1;
  }

  bool contains(int id) const { return mask_[id] != 0; }
  int vocab_size() const { return static_cast<int>(mask_.size()); }

  int count() const {
    int n = 0;
    for (char c : mask_) n += c != 0;
    return n;
  }

  std::vector<int> ids() const {
    std::vector<int> out;
    for (int i = 0; i < vocab_size(); ++i)
      if (mask_[i]) out.push_back(i);
    return out;
  }

 private:
  std::vector<char> mask_;
};

/// Union of (non-stop tokens of x) and (the M vocabulary tokens scoring
/// highest on the single-token similarity S(x, w)). With forbid_all_x_tokens
/// every x token is excluded regardless of stopword status, which is what the
/// retrieval harness needs to keep query term frequencies at zero.
inline ForbiddenSet build_forbidden_set(const TokenSequence& x,
                                        const SimilarityScorer& scorer,
                                        const std::vector<int>& stopwords,
                                        int M, int collision_length = 0,
                                        bool forbid_all_x_tokens = false) {
  const int vocab = scorer.vocab_size();
  if (M < 0 || M >= vocab) throw std::invalid_argument("M out of range");
  if (M >= vocab - collision_length)
    throw InfeasibleFilter("filter would leave too few tokens");
  ForbiddenSet out(vocab);
  std::vector<char> stop(vocab, 0);
  for (int id : stopwords) stop.at(id) = 1;
  for (int id : x.ids)
    if (forbid_all_x_tokens || !stop[id]) out.add(id);
  if (M > 0) {
    Vector scores(vocab);
    for (int w = 0; w < vocab; ++w)
      scores(w) = score_hard(scorer, x, TokenSequence{{w}});
    for (const auto& [id, value] : top_k(scores, M)) out.add(id);
  }
  if (out.count() >= vocab)
    throw InfeasibleFilter("filter excludes the whole vocabulary");
  return out;
}

// ---------------------------------------------------------------------------
// Results

struct CollisionResult {
  TokenSequence collision;
  double final_score = 0.0;
  std::vector<double> score_trace;  // reported best per outer round / step
  double eval_perplexity = std::numeric_limits<double>::quiet_NaN();
  std::string attack_name;
  AttackConfig config;
  int elapsed_iterations = 0;
};

// ---------------------------------------------------------------------------
// Soft regularizers

/// A differentiable bonus on the soft collision; larger = preferred. Added to
/// the relaxed objective as (1-beta)*S + beta*Omega.
class SoftRegularizer {
 public:
  virtual ~SoftRegularizer() = default;
  virtual double value_and_grad(const SoftSequence& soft,
                                Matrix* grad) const = 0;
};

/// Omega = -sum_t H(soft_t, P(w_t | soft_{1:t-1}; g)): the negated soft
/// LM cross entropy, so that maximizing it pulls the collision toward
/// LM-likely token choices.
class LmRegularizer final : public SoftRegularizer {
 public:
  explicit LmRegularizer(const CausalLM& lm) : lm_(&lm) {}

  double value_and_grad(const SoftSequence& soft,
                        Matrix* grad) const override {
    const int length = soft.length();
    if (grad) *grad = Matrix::Zero(length, soft.vocab_size());
    double omega = 0.0;
    for (int t = 0; t < length; ++t) {
      Matrix prefix = soft.rows.topRows(t);
      Matrix grad_prefix;
      Vector grad_target;
      double nll = lm_->soft_next_nll(prefix, soft.rows.row(t).transpose(),
                                      grad ? &grad_prefix : nullptr,
                                      grad ? &grad_target : nullptr);
      omega -= nll;
      if (grad) {
        if (t > 0) grad->topRows(t) -= grad_prefix;
        grad->row(t) -= grad_target.transpose();
      }
    }
    return omega;
  }

 private:
  const CausalLM* lm_;
};

inline double lm_regularizer(const SoftSequence& soft, const CausalLM& lm) {
  return LmRegularizer(lm).value_and_grad(soft, nullptr);
}

// ---------------------------------------------------------------------------
// Soft optimization and beam projection

inline void mask_forbidden(LogitMatrix& z, const ForbiddenSet& forbidden) {
  for (int t = 0; t < z.length(); ++t)
    for (int v = 0; v < z.vocab_size(); ++v)
      if (forbidden.contains(v)) z.values(t, v) = kMaskLogit;
}

inline SoftSequence relax(const LogitMatrix& z, double tau) {
  Matrix soft(z.length(), z.vocab_size());
  for (int t = 0; t < z.length(); ++t)
    soft.row(t) =
        temperature_softmax(z.values.row(t).transpose(), tau).transpose();
  return SoftSequence::from_rows(std::move(soft));
}

namespace detail {

// d(objective)/dZ for row-wise soft = softmax(Z/tau): with s the soft row and
// g = d(objective)/d(soft row), dz = (1/tau) * s .* (g - <g, s>).
inline Matrix chain_through_softmax(const SoftSequence& soft,
                                    const Matrix& grad_soft, double tau) {
  Matrix dz(soft.rows.rows(), soft.rows.cols());
  for (Eigen::Index t = 0; t < soft.rows.rows(); ++t) {
    double inner = grad_soft.row(t).dot(soft.rows.row(t));
    dz.row(t) = soft.rows.row(t)
                    .cwiseProduct((grad_soft.row(t).array() - inner).matrix()) /
                tau;
  }
  return dz;
}

}  // namespace detail

/// N steps of Adam ascent on (1-beta)*S(x, softmax(Z/tau)) + beta*Omega(Z).
/// Masked (exactly-zero-probability) tokens receive exactly zero gradient, so
/// the mask survives optimization untouched.
inline LogitMatrix optimize_soft(const TokenSequence& x,
                                 const SimilarityScorer& scorer, LogitMatrix z,
                                 const AttackConfig& cfg,
                                 const SoftRegularizer* regularizer = nullptr) {
  if (z.length() == 0 || z.vocab_size() != scorer.vocab_size())
    throw std::invalid_argument("Z shape mismatch");
  const double beta = cfg.lm_weight;
  AdamState adam;
  for (int iter = 0; iter < cfg.iters; ++iter) {
    SoftSequence soft = relax(z, cfg.temperature);
    Matrix grad_soft = Matrix::Zero(z.length(), z.vocab_size());
    if (beta < 1.0) {
      Matrix gs;
      scorer.score_with_soft_grad(x, MixedSequence::all_soft(soft), &gs);
      grad_soft += (1.0 - beta) * gs;
    }
    if (beta > 0.0 && regularizer) {
      Matrix gr;
      regularizer->value_and_grad(soft, &gr);
      grad_soft += beta * gr;
    }
    Matrix dz = detail::chain_through_softmax(soft, grad_soft,
                                              cfg.temperature);
    if (!dz.allFinite()) throw NumericalFailure(iter);
    adam.step(z.values, dz, cfg.step_size, /*maximize=*/true);
  }
  return z;
}

/// Left-to-right beam search over the top-K tokens of each logit row, ranking
/// candidates by S(x, hard-prefix + w + soft-suffix). Positions inside the
/// degeneration span draw candidates from `frequent_pool` instead of the
/// whole row.
inline TokenSequence beam_project(const TokenSequence& x,
                                  const SimilarityScorer& scorer,
                                  const LogitMatrix& z, const AttackConfig& cfg,
                                  const ForbiddenSet& forbidden,
                                  const std::vector<int>* frequent_pool =
                                      nullptr) {
  const int length = z.length();
  const int vocab = z.vocab_size();
  if (length != cfg.length)
    throw std::invalid_argument("Z length != config length");
  SoftSequence soft = relax(z, cfg.temperature);

  struct Beam {
    TokenSequence prefix;
    double score = 0.0;
  };
  std::vector<Beam> beams{Beam{}};

  for (int t = 0; t < length; ++t) {
    const bool in_span = cfg.span && frequent_pool && t >= cfg.span->start;
    std::vector<int> candidates;
    if (in_span) {
      // rank the pool by the current logit row
      Vector row = z.values.row(t).transpose();
      std::vector<int> pool = *frequent_pool;
      std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) {
        return row(a) != row(b) ? row(a) > row(b) : a < b;
      });
      const int take = std::min<int>(cfg.topk, static_cast<int>(pool.size()));
      for (int i = 0; i < take; ++i)
        if (!forbidden.contains(pool[i])) candidates.push_back(pool[i]);
    } else {
      auto ranked = top_k(z.values.row(t).transpose(),
                          std::min(cfg.topk, vocab));
      for (const auto& [id, value] : ranked)
        if (!forbidden.contains(id)) candidates.push_back(id);
    }
    if (candidates.empty())
      throw CandidateExhaustion("all top-K candidates are forbidden at t=" +
                                std::to_string(t));

    // suffix of relaxed rows t+1..T-1, shared by every beam
    std::optional<SoftSequence> suffix;
    if (t + 1 < length)
      suffix = SoftSequence::from_rows(soft.rows.bottomRows(length - t - 1));

    struct Scored {
      double score;
      int beam;
      int token;
    };
    std::vector<Scored> scored;
    scored.reserve(beams.size() * candidates.size());
    for (int b = 0; b < static_cast<int>(beams.size()); ++b) {
      for (int w : candidates) {
        TokenSequence prefix = beams[b].prefix;
        prefix.ids.push_back(w);
        double s = suffix ? score_partial(scorer, x, prefix, *suffix)
                          : score_partial(scorer, x, prefix);
        scored.push_back({s, b, w});
      }
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) {
                       if (a.score != b.score) return a.score > b.score;
                       if (a.beam != b.beam) return a.beam < b.beam;
                       return a.token < b.token;
                     });
    const int keep = std::min<int>(cfg.beam_size,
                                   static_cast<int>(scored.size()));
    std::vector<Beam> next;
    next.reserve(keep);
    for (int i = 0; i < keep; ++i) {
      TokenSequence prefix = beams[scored[i].beam].prefix;
      prefix.ids.push_back(scored[i].token);
      next.push_back({std::move(prefix), scored[i].score});
    }
    beams = std::move(next);
  }
  return beams.front().prefix;  // ranked by full hard score at the last step
}

// ---------------------------------------------------------------------------
// Aggressive and regularized collisions

/// Alternates relaxed optimization with beam projection, re-initializing the
/// logits from the label-smoothed projection after each round. Stops when the
/// best hard score improves by less than cfg.tol or after cfg.max_rounds.
inline CollisionResult aggressive_attack(const TokenSequence& x,
                                         const SimilarityScorer& scorer,
                                         const AttackConfig& cfg,
                                         const ForbiddenSet& forbidden,
                                         const SoftRegularizer* regularizer =
                                             nullptr,
                                         const std::vector<int>* frequent_pool =
                                             nullptr) {
  cfg.validate(scorer.vocab_size());
  LogitMatrix z(cfg.length, scorer.vocab_size());
  mask_forbidden(z, forbidden);

  CollisionResult result;
  result.attack_name = regularizer ? "regularized" : "aggressive";
  result.config = cfg;
  double best = -std::numeric_limits<double>::infinity();
  for (int round = 0; round < cfg.max_rounds; ++round) {
    z = optimize_soft(x, scorer, std::move(z), cfg, regularizer);
    TokenSequence c = beam_project(x, scorer, z, cfg, forbidden,
                                   frequent_pool);
    double s = score_hard(scorer, x, c);
    const double improvement = s - best;
    if (improvement > 0) {
      best = s;
      result.collision = std::move(c);
    }
    result.score_trace.push_back(best);
    result.elapsed_iterations = round + 1;
    if (improvement < cfg.tol) break;
    // label-smoothed re-initialization of the relaxation
    for (int t = 0; t < cfg.length; ++t)
      z.values.row(t) =
          label_smooth(result.collision.ids[t], cfg.label_smoothing,
                       scorer.vocab_size())
              .array()
              .log()
              .matrix()
              .transpose();
    mask_forbidden(z, forbidden);
  }
  result.final_score = best;
  return result;
}

/// Aggressive attack with the LM regularizer plus a degeneration span whose
/// positions are restricted to the most frequent vocabulary tokens.
inline CollisionResult regularized_attack(const TokenSequence& x,
                                          const SimilarityScorer& scorer,
                                          const CausalLM& lm,
                                          AttackConfig cfg,
                                          const ForbiddenSet& forbidden,
                                          const Vocabulary& vocab) {
  if (!cfg.span)
    cfg.span = DegenerationSpan{(cfg.length + 1) / 2, 1000};
  const int pool_cap = std::max(1, vocab.size() / 2);
  const int pool_size = std::min(cfg.span->frequent_pool, pool_cap);
  std::vector<int> pool;
  for (int id : vocab.top_frequent(pool_size))
    if (!forbidden.contains(id)) pool.push_back(id);
  if (pool.empty())
    throw InfeasibleFilter("frequent pool empty after filtering");

  LmRegularizer reg(lm);
  CollisionResult result =
      aggressive_attack(x, scorer, cfg, forbidden,
                        cfg.lm_weight > 0 ? &reg : nullptr, &pool);
  result.attack_name = "regularized";
  return result;
}

// ---------------------------------------------------------------------------
// Natural collisions

/// A few plain gradient-ascent steps pushing the next-token logits toward
/// tokens that collide with x: z = l + delta, maximizing
/// S(x, prefix + softmax(z/tau)). Forbidden tokens stay masked throughout.
inline Vector perturb_logits(const Vector& logits, const TokenSequence& prefix,
                             const TokenSequence& x,
                             const SimilarityScorer& scorer,
                             const AttackConfig& cfg,
                             const ForbiddenSet& forbidden) {
  Vector z = logits;
  for (int v = 0; v < z.size(); ++v)
    if (forbidden.contains(v)) z(v) = kMaskLogit;
  for (int iter = 0; iter < cfg.iters; ++iter) {
    Vector soft_row = temperature_softmax(z, cfg.temperature);
    SoftSequence soft = SoftSequence::from_rows(soft_row.transpose());
    Matrix grad_soft;
    scorer.score_with_soft_grad(x, MixedSequence{prefix, soft}, &grad_soft);
    double inner = grad_soft.row(0).dot(soft_row.transpose());
    Vector dz = soft_row.cwiseProduct(
                    (grad_soft.row(0).transpose().array() - inner).matrix()) /
                cfg.temperature;
    if (!dz.allFinite()) throw NumericalFailure(iter);
    z += cfg.step_size * dz;
    for (int v = 0; v < z.size(); ++v)
      if (forbidden.contains(v)) z(v) = kMaskLogit;
  }
  return z;
}

/// LM decoding with a joint search: per step the LM logits are perturbed
/// toward the similarity objective, the top-K surviving tokens are scored
/// with (1-beta)*S + beta*logP, and the top-B (beam, token) pairs continue.
/// Returns the best beam, stripped of the start token.
inline CollisionResult natural_attack(const TokenSequence& x,
                                      const SimilarityScorer& scorer,
                                      const CausalLM& lm,
                                      const AttackConfig& cfg,
                                      const ForbiddenSet& forbidden) {
  cfg.validate(scorer.vocab_size());
  if (lm.vocab_size() != scorer.vocab_size())
    throw VocabularyMismatch("lm and scorer vocabulary sizes differ");
  const double beta = cfg.lm_weight;

  struct Beam {
    TokenSequence generated;
    double logp = 0.0;
    double joint = 0.0;
    double sim = 0.0;
  };
  std::vector<Beam> beams{Beam{}};
  CollisionResult result;
  result.attack_name = "natural";
  result.config = cfg;

  for (int t = 0; t < cfg.length; ++t) {
    struct Scored {
      double joint;
      int beam;
      int token;
      double logp;
      double sim;
    };
    std::vector<Scored> scored;
    for (int b = 0; b < static_cast<int>(beams.size()); ++b) {
      TokenSequence lm_prefix{{lm.start_id()}};
      lm_prefix.ids.insert(lm_prefix.ids.end(), beams[b].generated.ids.begin(),
                           beams[b].generated.ids.end());
      Vector logits = lm.next_logits(lm_prefix);
      Vector z = perturb_logits(logits, beams[b].generated, x, scorer, cfg,
                                forbidden);
      // true LM log-probabilities for the joint score
      double m = logits.maxCoeff();
      double lse = m + std::log((logits.array() - m).exp().sum());
      for (const auto& [w, zval] :
           top_k(z, std::min(cfg.topk, static_cast<int>(z.size())))) {
        if (forbidden.contains(w)) continue;
        TokenSequence cand = beams[b].generated;
        cand.ids.push_back(w);
        double sim = score_partial(scorer, x, cand);
        double logp = beams[b].logp + (logits(w) - lse);
        scored.push_back({(1.0 - beta) * sim + beta * logp, b, w, logp, sim});
      }
    }
    if (scored.empty())
      throw CandidateExhaustion("all natural candidates forbidden at t=" +
                                std::to_string(t));
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) {
                       if (a.joint != b.joint) return a.joint > b.joint;
                       if (a.beam != b.beam) return a.beam < b.beam;
                       return a.token < b.token;
                     });
    const int keep = std::min<int>(cfg.beam_size,
                                   static_cast<int>(scored.size()));
    std::vector<Beam> next;
    next.reserve(keep);
    for (int i = 0; i < keep; ++i) {
      Beam nb;
      nb.generated = beams[scored[i].beam].generated;
      nb.generated.ids.push_back(scored[i].token);
      nb.logp = scored[i].logp;
      nb.joint = scored[i].joint;
      nb.sim = scored[i].sim;
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
    result.score_trace.push_back(beams.front().sim);
    result.elapsed_iterations = t + 1;
  }
  result.collision = beams.front().generated;
  result.final_score = score_hard(scorer, x, result.collision);
  return result;
}

// ---------------------------------------------------------------------------
// HotFlip baseline

/// First-order baseline: rank all single-token flips by the Taylor gain
/// (e_v - e_t)' grad_{e_t} S, evaluate the true score of the top-K, and apply
/// the best strictly-improving flip once per sweep.
inline CollisionResult hotflip_attack(const TokenSequence& x,
                                      const SimilarityScorer& scorer,
                                      const AttackConfig& cfg,
                                      const ForbiddenSet& forbidden,
                                      int init_token = -1,
                                      const Vocabulary* vocab = nullptr) {
  cfg.validate(scorer.vocab_size());
  const int vocab_size = scorer.vocab_size();
  if (init_token < 0) {
    if (vocab && vocab->has_frequency_ranks()) {
      for (int id : vocab->top_frequent(vocab_size))
        if (!forbidden.contains(id)) {
          init_token = id;
          break;
        }
    } else {
      for (int id = 0; id < vocab_size; ++id)
        if (!forbidden.contains(id)) {
          init_token = id;
          break;
        }
    }
  }
  if (init_token < 0 || forbidden.contains(init_token))
    throw InfeasibleFilter("no usable initialization token");

  CollisionResult result;
  result.attack_name = "hotflip";
  result.config = cfg;
  result.collision = TokenSequence{
      std::vector<int>(static_cast<std::size_t>(cfg.length), init_token)};
  double current = score_hard(scorer, x, result.collision);
  result.score_trace.push_back(current);

  const Matrix& emb = scorer.embeddings();
  for (int sweep = 0; sweep < cfg.iters; ++sweep) {
    Matrix grads = scorer.embed_grad(x, result.collision);  // T x h
    struct Flip {
      double gain;
      int t;
      int v;
    };
    std::vector<Flip> flips;
    flips.reserve(static_cast<std::size_t>(cfg.length) * vocab_size);
    for (int t = 0; t < cfg.length; ++t) {
      Vector gains = emb * grads.row(t).transpose();
      const double current_term = gains(result.collision.ids[t]);
      for (int v = 0; v < vocab_size; ++v) {
        if (v == result.collision.ids[t] || forbidden.contains(v)) continue;
        flips.push_back({gains(v) - current_term, t, v});
      }
    }
    const int take = std::min<int>(cfg.topk, static_cast<int>(flips.size()));
    std::partial_sort(flips.begin(), flips.begin() + take, flips.end(),
                      [](const Flip& a, const Flip& b) {
                        if (a.gain != b.gain) return a.gain > b.gain;
                        if (a.t != b.t) return a.t < b.t;
                        return a.v < b.v;
                      });
    int best_t = -1, best_v = -1;
    double best_score = current;
    for (int i = 0; i < take; ++i) {
      TokenSequence cand = result.collision;
      cand.ids[flips[i].t] = flips[i].v;
      double s = score_hard(scorer, x, cand);
      if (s > best_score) {
        best_score = s;
        best_t = flips[i].t;
        best_v = flips[i].v;
      }
    }
    if (best_t < 0) break;  // no strictly improving flip
    result.collision.ids[best_t] = best_v;
    current = best_score;
    result.score_trace.push_back(current);
    result.elapsed_iterations = sweep + 1;
  }
  result.final_score = current;
  return result;
}

}  // namespace collider

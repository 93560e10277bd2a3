// Single-layer transformer encoder shared by the toy scorers: one attention
// head, a relu feed-forward block, residuals, and per-block layer norm.
// Two forward paths: a plain Eigen one for scoring (no gradients) and a taped
// one for attack gradients and training. test_models pins them against each
// other.
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "collider/core.hpp"
#include "collider/tape.hpp"

namespace collider {

struct EncoderParams {
  int vocab = 0, h = 0, ff = 0, max_len = 0;
  Matrix E;                              // vocab x h embeddings
  Matrix Pos;                            // max_len x h learned positions
  Matrix Wq, Wk, Wv, Wo;                 // h x h
  Matrix ln1_g, ln1_b, ln2_g, ln2_b;     // 1 x h
  Matrix W1, b1;                         // h x ff, 1 x ff
  Matrix W2, b2;                         // ff x h, 1 x h

  static EncoderParams init(int vocab, int h, int max_len,
                            std::mt19937_64& rng) {
    EncoderParams p;
    p.vocab = vocab;
    p.h = h;
    p.ff = 2 * h;
    p.max_len = max_len;
    std::normal_distribution<double> dist(0.0, 1.0);
    auto randn = [&](Eigen::Index r, Eigen::Index c, double scale) {
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * dist(rng);
      return m;
    };
    const double s = 1.0 / std::sqrt(static_cast<double>(h));
    p.E = randn(vocab, h, 0.5);
    p.Pos = randn(max_len, h, 0.1);
    p.Wq = randn(h, h, s);
    p.Wk = randn(h, h, s);
    p.Wv = randn(h, h, s);
    p.Wo = randn(h, h, s);
    p.W1 = randn(h, p.ff, s);
    p.b1 = Matrix::Zero(1, p.ff);
    p.W2 = randn(p.ff, h, 1.0 / std::sqrt(static_cast<double>(p.ff)));
    p.b2 = Matrix::Zero(1, h);
    p.ln1_g = Matrix::Ones(1, h);
    p.ln1_b = Matrix::Zero(1, h);
    p.ln2_g = Matrix::Ones(1, h);
    p.ln2_b = Matrix::Zero(1, h);
    return p;
  }

  std::vector<std::pair<std::string, Matrix*>> refs() {
    return {{"E", &E},         {"Pos", &Pos},     {"Wq", &Wq},
            {"Wk", &Wk},       {"Wv", &Wv},       {"Wo", &Wo},
            {"ln1_g", &ln1_g}, {"ln1_b", &ln1_b}, {"ln2_g", &ln2_g},
            {"ln2_b", &ln2_b}, {"W1", &W1},       {"b1", &b1},
            {"W2", &W2},       {"b2", &b2}};
  }
  std::vector<std::pair<std::string, const Matrix*>> refs() const {
    auto mut = const_cast<EncoderParams*>(this)->refs();
    std::vector<std::pair<std::string, const Matrix*>> out;
    out.reserve(mut.size());
    for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
    return out;
  }
};

// -- value-only forward ------------------------------------------------

namespace detail {

inline Matrix softmax_rows_plain(Matrix a) {
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double m = a.row(r).maxCoeff();
    a.row(r) = (a.row(r).array() - m).exp();
    a.row(r) /= a.row(r).sum();
  }
  return a;
}

inline Matrix layer_norm_plain(const Matrix& x, const Matrix& g,
                               const Matrix& b) {
  static constexpr double kEps = 1e-5;
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    out.row(r) = (((x.row(r).array() - mu) / std::sqrt(var + kEps)) *
                  g.row(0).array()) +
                 b.row(0).array();
  }
  return out;
}

}  // namespace detail

/// Contextual states for an already-embedded input (positions included).
inline Matrix encoder_states(const EncoderParams& p, const Matrix& x) {
  const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(p.h));
  Matrix q = x * p.Wq, k = x * p.Wk, v = x * p.Wv;
  Matrix attn = detail::softmax_rows_plain(q * k.transpose() * inv_sqrt_h);
  Matrix r1 = detail::layer_norm_plain(x + (attn * v) * p.Wo, p.ln1_g, p.ln1_b);
  Matrix f = ((r1 * p.W1).rowwise() + p.b1.row(0)).cwiseMax(0.0) * p.W2;
  f.rowwise() += p.b2.row(0);
  return detail::layer_norm_plain(r1 + f, p.ln2_g, p.ln2_b);
}

// -- taped forward ------------------------------------------------------

/// Tape handles for every encoder parameter; built once per recorded graph.
struct EncoderLeaves {
  ad::Ctx::V Wq, Wk, Wv, Wo, ln1_g, ln1_b, ln2_g, ln2_b, W1, b1, W2, b2;

  static EncoderLeaves make(ad::Ctx& ctx, const EncoderParams& p) {
    return EncoderLeaves{
        ctx.leaf(p.Wq),    ctx.leaf(p.Wk),    ctx.leaf(p.Wv),
        ctx.leaf(p.Wo),    ctx.leaf(p.ln1_g), ctx.leaf(p.ln1_b),
        ctx.leaf(p.ln2_g), ctx.leaf(p.ln2_b), ctx.leaf(p.W1),
        ctx.leaf(p.b1),    ctx.leaf(p.W2),    ctx.leaf(p.b2)};
  }
};

inline ad::Ctx::V encoder_states(ad::Ctx& ctx, const EncoderLeaves& w,
                                 ad::Ctx::V x, int h) {
  const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(h));
  auto q = ctx.mm(x, w.Wq);
  auto k = ctx.mm(x, w.Wk);
  auto v = ctx.mm(x, w.Wv);
  auto attn = ctx.softmax_rows(ctx.scale(ctx.mm(q, ctx.transpose(k)), inv_sqrt_h));
  auto r1 = ctx.layer_norm_rows(ctx.add(x, ctx.mm(ctx.mm(attn, v), w.Wo)),
                                w.ln1_g, w.ln1_b);
  auto f = ctx.add_row_broadcast(
      ctx.mm(ctx.relu_(ctx.add_row_broadcast(ctx.mm(r1, w.W1), w.b1)), w.W2),
      w.b2);
  return ctx.layer_norm_rows(ctx.add(r1, f), w.ln2_g, w.ln2_b);
}

}  // namespace collider

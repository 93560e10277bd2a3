// Trainable desk-scale victims: a single-layer transformer similarity scorer
// (concat or dual-encoder head) and a neural bigram causal LM. Both support
// soft inputs by embedding probability rows as weighted averages of the
// embedding table, and both serialize to JSON checkpoints bound to the
// vocabulary hash.
#pragma once

#include <json.hpp>

#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "collider/core.hpp"
#include "collider/encoder.hpp"
#include "collider/models.hpp"
#include "collider/optim.hpp"
#include "collider/tape.hpp"

namespace collider {

struct TrainReport {
  std::string metric;
  double value = 0.0;
  double final_loss = 0.0;
  int epochs = 0;
  std::uint64_t seed = 0;
};

struct LabeledPair {
  TokenSequence a, b;
  int label = 0;  // 1 = semantically related
};

namespace detail {

inline Matrix embed_hard(const EncoderParams& p, const TokenSequence& seq,
                         int pos_offset) {
  if (pos_offset + seq.length() > p.max_len)
    throw std::invalid_argument("sequence exceeds model maximum length");
  Matrix out(seq.length(), p.h);
  for (int t = 0; t < seq.length(); ++t)
    out.row(t) = p.E.row(seq.ids[t]) + p.Pos.row(pos_offset + t);
  return out;
}

inline Matrix embed_mixed(const EncoderParams& p, const MixedSequence& c,
                          int pos_offset) {
  if (pos_offset + c.length() > p.max_len)
    throw std::invalid_argument("sequence exceeds model maximum length");
  Matrix out(c.length(), p.h);
  int t = 0;
  for (; t < c.prefix.length(); ++t)
    out.row(t) = p.E.row(c.prefix.ids[t]) + p.Pos.row(pos_offset + t);
  if (c.soft) {
    Matrix soft_emb = c.soft->rows * p.E;
    for (int s = 0; s < static_cast<int>(soft_emb.rows()); ++s, ++t)
      out.row(t) = soft_emb.row(s) + p.Pos.row(pos_offset + t);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Transformer similarity scorer

class TransformerScorer final : public SimilarityScorer {
 public:
  Kind head = Kind::Concat;
  EncoderParams enc;
  Matrix w_out;  // h x 1, concat readout
  Matrix b_out;  // 1 x 1
  std::uint64_t vocab_hash = 0;
  TrainReport report;

  TransformerScorer() = default;

  Kind kind() const override { return head; }
  int vocab_size() const override { return enc.vocab; }
  int max_len() const override { return enc.max_len; }
  const Matrix& embeddings() const override { return enc.E; }
  const TrainReport& train_report() const { return report; }

  double score(const TokenSequence& x, const MixedSequence& c) const override {
    check_scorable(*this, x, c);
    if (head == Kind::Concat) {
      Matrix input(x.length() + c.length(), enc.h);
      input << detail::embed_hard(enc, x, 0),
          detail::embed_mixed(enc, c, x.length());
      Matrix pooled = encoder_states(enc, input).colwise().mean();
      double logit = (pooled * w_out)(0, 0) + b_out(0, 0);
      return 1.0 / (1.0 + std::exp(-logit));
    }
    RowVector px =
        encoder_states(enc, detail::embed_hard(enc, x, 0)).colwise().mean();
    RowVector pc =
        encoder_states(enc, detail::embed_mixed(enc, c, 0)).colwise().mean();
    return px.dot(pc);
  }

  double score_with_soft_grad(const TokenSequence& x, const MixedSequence& c,
                              Matrix* grad_soft) const override {
    if (!c.soft) throw std::invalid_argument("no soft rows to differentiate");
    Matrix input_grad;
    double value = objective_with_input_grad(x, c, &input_grad);
    if (grad_soft) {
      const int soft_rows = c.soft->length();
      const int offset = input_grad.rows() - soft_rows;
      *grad_soft = input_grad.middleRows(offset, soft_rows) * enc.E.transpose();
    }
    return value;
  }

  Matrix embed_grad(const TokenSequence& x,
                    const TokenSequence& c) const override {
    Matrix input_grad;
    objective_with_input_grad(x, MixedSequence::hard(c), &input_grad);
    return input_grad.bottomRows(c.length());
  }

  Matrix contextual_states(const TokenSequence& seq) const override {
    seq.check_in_range(vocab_size());
    if (seq.empty() || seq.length() > enc.max_len)
      throw std::invalid_argument("sequence empty or exceeds maximum length");
    return encoder_states(enc, detail::embed_hard(enc, seq, 0));
  }

 private:
  // Pre-sigmoid logit (concat) or pooled dot (dual), plus its gradient with
  // respect to the embedded rows of c.
  double objective_with_input_grad(const TokenSequence& x,
                                   const MixedSequence& c,
                                   Matrix* input_grad) const {
    check_scorable(*this, x, c);
    ad::Ctx ctx(true);
    EncoderLeaves w = EncoderLeaves::make(ctx, enc);
    if (head == Kind::Concat) {
      Matrix input(x.length() + c.length(), enc.h);
      input << detail::embed_hard(enc, x, 0),
          detail::embed_mixed(enc, c, x.length());
      auto in = ctx.leaf(std::move(input));
      auto pooled = ctx.mean_rows(encoder_states(ctx, w, in, enc.h));
      auto logit = ctx.add(ctx.mm(pooled, ctx.leaf(w_out)), ctx.leaf(b_out));
      ctx.backward(logit);
      if (input_grad)
        *input_grad = ctx.grad(in).bottomRows(c.length());
      return ctx.scalar(logit);
    }
    RowVector px =
        encoder_states(enc, detail::embed_hard(enc, x, 0)).colwise().mean();
    auto in = ctx.leaf(detail::embed_mixed(enc, c, 0));
    auto pooled = ctx.mean_rows(encoder_states(ctx, w, in, enc.h));
    auto out = ctx.dot(pooled, ctx.leaf(px));
    ctx.backward(out);
    if (input_grad) *input_grad = ctx.grad(in);
    return ctx.scalar(out);
  }
};

// ---------------------------------------------------------------------------
// Neural bigram LM

class BigramLM final : public CausalLM {
 public:
  int start = 0;
  std::uint64_t vocab_hash = 0;
  Matrix E;       // |V| x h
  Matrix W1, b1;  // h x h, 1 x h
  Matrix W2, b2;  // h x |V|, 1 x |V|
  TrainReport report;

  BigramLM() = default;

  static BigramLM init(int vocab, int h, int start_id, std::mt19937_64& rng) {
    BigramLM lm;
    lm.start = start_id;
    std::normal_distribution<double> dist(0.0, 1.0);
    auto randn = [&](Eigen::Index r, Eigen::Index c, double scale) {
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * dist(rng);
      return m;
    };
    const double s = 1.0 / std::sqrt(static_cast<double>(h));
    lm.E = randn(vocab, h, 0.5);
    lm.W1 = randn(h, h, s);
    lm.b1 = Matrix::Zero(1, h);
    lm.W2 = randn(h, vocab, s);
    lm.b2 = Matrix::Zero(1, vocab);
    return lm;
  }

  int vocab_size() const override { return static_cast<int>(E.rows()); }
  int start_id() const override { return start; }
  const TrainReport& train_report() const { return report; }

  Vector next_logits(const TokenSequence& prefix) const override {
    if (prefix.empty()) throw std::invalid_argument("empty prefix");
    prefix.check_in_range(vocab_size());
    return logits_for_row(E.row(prefix.ids.back()));
  }

  double soft_next_nll(const Matrix& soft_prefix_rows, const Vector& target,
                       Matrix* grad_prefix, Vector* grad_target) const override {
    if (target.size() != vocab_size())
      throw std::invalid_argument("target dimension != |V|");
    Matrix xprev(1, E.cols());
    if (soft_prefix_rows.rows() == 0) {
      xprev = E.row(start);
    } else {
      if (soft_prefix_rows.cols() != vocab_size())
        throw std::invalid_argument("soft prefix dimension != |V|");
      xprev = soft_prefix_rows.row(soft_prefix_rows.rows() - 1) * E;
    }
    const bool want_grads = grad_prefix || grad_target;
    ad::Ctx ctx(want_grads);
    auto x = ctx.leaf(std::move(xprev));
    auto logp = ctx.log_softmax_rows(ctx.add_row_broadcast(
        ctx.mm(ctx.tanh_(ctx.add_row_broadcast(ctx.mm(x, ctx.leaf(W1)),
                                                ctx.leaf(b1))),
               ctx.leaf(W2)),
        ctx.leaf(b2)));
    auto target_leaf = ctx.leaf(target.transpose());
    auto nll = ctx.scale(ctx.dot(target_leaf, logp), -1.0);
    if (want_grads) {
      ctx.backward(nll);
      if (grad_target) *grad_target = ctx.grad(target_leaf).row(0).transpose();
      if (grad_prefix) {
        *grad_prefix = Matrix::Zero(soft_prefix_rows.rows(), vocab_size());
        if (soft_prefix_rows.rows() > 0)
          grad_prefix->row(grad_prefix->rows() - 1) =
              ctx.grad(x).row(0) * E.transpose();
      }
    }
    return ctx.scalar(nll);
  }

 private:
  Vector logits_for_row(const RowVector& emb) const {
    RowVector hidden =
        ((emb * W1) + b1.row(0)).array().tanh().matrix();
    return ((hidden * W2) + b2.row(0)).transpose();
  }
};

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline void scatter_embedding_grads(const EncoderParams& p,
                                    const std::vector<int>& ids,
                                    int pos_offset, const Matrix& input_grad,
                                    Matrix& grad_E, Matrix& grad_Pos) {
  (void)p;
  for (int t = 0; t < static_cast<int>(ids.size()); ++t) {
    grad_E.row(ids[t]) += input_grad.row(t);
    grad_Pos.row(pos_offset + t) += input_grad.row(t);
  }
}

}  // namespace detail

/// Trains a similarity scorer on labeled pairs. Deterministic for a fixed
/// seed; throws TrainingFailure on single-class data. Held-out metric:
/// classification accuracy for concat, top-1 ranking accuracy among 10
/// candidates for dual encoders.
inline TransformerScorer train_toy_similarity(
    const Vocabulary& vocab, const std::vector<LabeledPair>& pairs,
    SimilarityScorer::Kind kind, int h, int epochs, std::uint64_t seed,
    int max_len = 128, double lr = 3e-3, int batch_size = 32) {
  if (pairs.empty()) throw TrainingFailure("no training pairs");
  bool pos = false, neg = false;
  for (const auto& pr : pairs) (pr.label ? pos : neg) = true;
  if (!pos || !neg) throw TrainingFailure("training data has a single class");

  std::mt19937_64 rng(seed);
  TransformerScorer scorer;
  scorer.head = kind;
  scorer.enc = EncoderParams::init(vocab.size(), h, max_len, rng);
  scorer.w_out = Matrix::Zero(h, 1);
  scorer.b_out = Matrix::Zero(1, 1);
  {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < h; ++i)
      scorer.w_out(i, 0) = dist(rng) / std::sqrt(static_cast<double>(h));
  }
  scorer.vocab_hash = vocab.hash();

  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int heldout = std::max<int>(1, static_cast<int>(pairs.size()) / 10);
  std::vector<int> eval_idx(order.end() - heldout, order.end());
  std::vector<int> train_idx(order.begin(), order.end() - heldout);

  std::vector<std::pair<std::string, Matrix*>> params = scorer.enc.refs();
  params.emplace_back("w_out", &scorer.w_out);
  params.emplace_back("b_out", &scorer.b_out);
  std::vector<AdamState> adam(params.size());

  const bool concat = kind == SimilarityScorer::Kind::Concat;
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < train_idx.size();
         begin += batch_size) {
      const std::size_t end =
          std::min(begin + batch_size, train_idx.size());
      ad::Ctx ctx(true);
      EncoderLeaves w = EncoderLeaves::make(ctx, scorer.enc);
      auto w_out_leaf = ctx.leaf(scorer.w_out);
      auto b_out_leaf = ctx.leaf(scorer.b_out);
      ad::Ctx::V total = ctx.leaf(Matrix::Zero(1, 1));
      struct InputRef {
        ad::Ctx::V node;
        std::vector<int> ids;
        int pos_offset;
      };
      std::vector<InputRef> inputs;
      for (std::size_t i = begin; i < end; ++i) {
        const LabeledPair& pr = pairs[train_idx[i]];
        const double y = pr.label;
        ad::Ctx::V z;
        if (concat) {
          std::vector<int> ids = pr.a.ids;
          ids.insert(ids.end(), pr.b.ids.begin(), pr.b.ids.end());
          auto in = ctx.leaf(detail::embed_hard(
              scorer.enc, TokenSequence{ids}, 0));
          inputs.push_back({in, ids, 0});
          auto pooled = ctx.mean_rows(encoder_states(ctx, w, in, h));
          z = ctx.add(ctx.mm(pooled, w_out_leaf), b_out_leaf);
        } else {
          auto ina = ctx.leaf(detail::embed_hard(scorer.enc, pr.a, 0));
          auto inb = ctx.leaf(detail::embed_hard(scorer.enc, pr.b, 0));
          inputs.push_back({ina, pr.a.ids, 0});
          inputs.push_back({inb, pr.b.ids, 0});
          z = ctx.dot(ctx.mean_rows(encoder_states(ctx, w, ina, h)),
                      ctx.mean_rows(encoder_states(ctx, w, inb, h)));
        }
        // binary cross entropy with logits: softplus(z) - y*z
        total = ctx.add(total, ctx.add(ctx.softplus_(z), ctx.scale(z, -y)));
      }
      total = ctx.scale(total, 1.0 / static_cast<double>(end - begin));
      ctx.backward(total);
      epoch_loss += ctx.scalar(total) * static_cast<double>(end - begin);

      Matrix grad_E = Matrix::Zero(scorer.enc.E.rows(), scorer.enc.E.cols());
      Matrix grad_Pos =
          Matrix::Zero(scorer.enc.Pos.rows(), scorer.enc.Pos.cols());
      for (const auto& in : inputs)
        detail::scatter_embedding_grads(scorer.enc, in.ids, in.pos_offset,
                                        ctx.grad(in.node), grad_E, grad_Pos);
      const ad::Ctx::V leaves[] = {w.Wq,    w.Wk,    w.Wv,    w.Wo,
                                   w.ln1_g, w.ln1_b, w.ln2_g, w.ln2_b,
                                   w.W1,    w.b1,    w.W2,    w.b2};
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const std::string& name = params[pi].first;
        if (name == "E") {
          adam[pi].step(*params[pi].second, grad_E, lr);
        } else if (name == "Pos") {
          adam[pi].step(*params[pi].second, grad_Pos, lr);
        } else if (name == "w_out") {
          adam[pi].step(*params[pi].second, ctx.grad(w_out_leaf), lr);
        } else if (name == "b_out") {
          adam[pi].step(*params[pi].second, ctx.grad(b_out_leaf), lr);
        } else {
          // encoder weights follow refs() order after E and Pos
          adam[pi].step(*params[pi].second, ctx.grad(leaves[pi - 2]), lr);
        }
      }
    }
    last_epoch_loss = epoch_loss / static_cast<double>(train_idx.size());
  }

  scorer.report.final_loss = last_epoch_loss;
  scorer.report.epochs = epochs;
  scorer.report.seed = seed;
  // held-out accuracy; the decision threshold is 0.5 on the sigmoid for the
  // concat head and 0 on the raw dot for the dual head
  int correct = 0;
  for (int i : eval_idx) {
    double s = score_hard(scorer, pairs[i].a, pairs[i].b);
    const bool predicted = concat ? s > 0.5 : s > 0.0;
    correct += predicted == (pairs[i].label == 1);
  }
  scorer.report.metric = "heldout_accuracy";
  scorer.report.value =
      static_cast<double>(correct) / static_cast<double>(eval_idx.size());
  return scorer;
}

/// Trains the neural bigram LM over (previous, next) windows of the corpus,
/// with the start token prepended to every sequence. Held-out metric is
/// perplexity over the last tenth of the corpus.
inline BigramLM train_toy_lm(const Vocabulary& vocab,
                             const std::vector<TokenSequence>& corpus, int h,
                             int epochs, std::uint64_t seed, double lr = 5e-3,
                             int batch_size = 256) {
  if (corpus.empty()) throw TrainingFailure("empty corpus");
  std::mt19937_64 rng(seed);
  BigramLM lm = BigramLM::init(vocab.size(), h, vocab.start_id(), rng);
  lm.vocab_hash = vocab.hash();

  const int heldout = std::max<int>(1, static_cast<int>(corpus.size()) / 10);
  std::vector<std::pair<int, int>> windows;
  for (std::size_t s = 0; s + heldout < corpus.size(); ++s) {
    int prev = vocab.start_id();
    for (int id : corpus[s].ids) {
      windows.emplace_back(prev, id);
      prev = id;
    }
  }
  if (windows.empty()) throw TrainingFailure("corpus too small");

  std::vector<AdamState> adam(5);
  Matrix* params[] = {&lm.E, &lm.W1, &lm.b1, &lm.W2, &lm.b2};
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(windows.begin(), windows.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
      const std::size_t end = std::min(begin + batch_size, windows.size());
      const int n = static_cast<int>(end - begin);
      Matrix X(n, h);
      Matrix Y = Matrix::Zero(n, vocab.size());
      for (int i = 0; i < n; ++i) {
        X.row(i) = lm.E.row(windows[begin + i].first);
        Y(i, windows[begin + i].second) = 1.0;
      }
      ad::Ctx ctx(true);
      auto x = ctx.leaf(std::move(X));
      auto w1 = ctx.leaf(lm.W1), bb1 = ctx.leaf(lm.b1);
      auto w2 = ctx.leaf(lm.W2), bb2 = ctx.leaf(lm.b2);
      auto logp = ctx.log_softmax_rows(ctx.add_row_broadcast(
          ctx.mm(ctx.tanh_(ctx.add_row_broadcast(ctx.mm(x, w1), bb1)), w2),
          bb2));
      auto loss = ctx.scale(ctx.dot(ctx.leaf(Y), logp), -1.0 / n);
      ctx.backward(loss);
      epoch_loss += ctx.scalar(loss) * n;

      Matrix grad_E = Matrix::Zero(lm.E.rows(), lm.E.cols());
      const Matrix& dX = ctx.grad(x);
      for (int i = 0; i < n; ++i)
        grad_E.row(windows[begin + i].first) += dX.row(i);
      const Matrix* grads[] = {&grad_E, &ctx.grad(w1), &ctx.grad(bb1),
                               &ctx.grad(w2), &ctx.grad(bb2)};
      for (int pi = 0; pi < 5; ++pi)
        adam[pi].step(*params[pi], *grads[pi], lr);
    }
    last_epoch_loss = epoch_loss / static_cast<double>(windows.size());
  }

  double nll = 0.0;
  int count = 0;
  for (std::size_t s = corpus.size() - heldout; s < corpus.size(); ++s) {
    TokenSequence prefix{{vocab.start_id()}};
    for (int id : corpus[s].ids) {
      nll -= lm.next_log_prob(prefix, id);
      prefix.ids.push_back(id);
      ++count;
    }
  }
  lm.report.metric = "heldout_perplexity";
  lm.report.value = count ? std::exp(nll / count) : 0.0;
  lm.report.final_loss = last_epoch_loss;
  lm.report.epochs = epochs;
  lm.report.seed = seed;
  return lm;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  j["data"] = std::move(data);
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = data[static_cast<std::size_t>(r * m.cols() + c)];
  return m;
}

inline nlohmann::json report_to_json(const TrainReport& r) {
  return {{"metric", r.metric},
          {"value", r.value},
          {"final_loss", r.final_loss},
          {"epochs", r.epochs},
          {"seed", r.seed}};
}

inline TrainReport report_from_json(const nlohmann::json& j) {
  TrainReport r;
  r.metric = j.at("metric").get<std::string>();
  r.value = j.at("value").get<double>();
  r.final_loss = j.at("final_loss").get<double>();
  r.epochs = j.at("epochs").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump();
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  return nlohmann::json::parse(in);
}

}  // namespace detail

inline void save_scorer(const TransformerScorer& s, const std::string& path) {
  nlohmann::json j;
  j["schema"] = 1;
  j["kind"] = s.head == SimilarityScorer::Kind::Concat ? "concat" : "dual";
  j["vocab_hash"] = s.vocab_hash;
  j["h"] = s.enc.h;
  j["ff"] = s.enc.ff;
  j["vocab"] = s.enc.vocab;
  j["max_len"] = s.enc.max_len;
  nlohmann::json params;
  for (const auto& [name, mat] : s.enc.refs())
    params[name] = detail::matrix_to_json(*mat);
  params["w_out"] = detail::matrix_to_json(s.w_out);
  params["b_out"] = detail::matrix_to_json(s.b_out);
  j["params"] = std::move(params);
  j["train_report"] = detail::report_to_json(s.report);
  detail::write_json_file(j, path);
}

inline TransformerScorer load_scorer(const std::string& path,
                                     const Vocabulary& vocab) {
  nlohmann::json j = detail::read_json_file(path);
  TransformerScorer s;
  if (j.at("vocab_hash").get<std::uint64_t>() != vocab.hash())
    throw VocabularyMismatch("checkpoint vocabulary hash mismatch: " + path);
  s.head = j.at("kind") == "concat" ? SimilarityScorer::Kind::Concat
                                    : SimilarityScorer::Kind::DualEncoder;
  s.vocab_hash = j.at("vocab_hash").get<std::uint64_t>();
  s.enc.vocab = j.at("vocab").get<int>();
  s.enc.h = j.at("h").get<int>();
  s.enc.ff = j.at("ff").get<int>();
  s.enc.max_len = j.at("max_len").get<int>();
  const auto& params = j.at("params");
  for (auto& [name, mat] : s.enc.refs())
    *mat = detail::matrix_from_json(params.at(name));
  s.w_out = detail::matrix_from_json(params.at("w_out"));
  s.b_out = detail::matrix_from_json(params.at("b_out"));
  s.report = detail::report_from_json(j.at("train_report"));
  return s;
}

inline void save_lm(const BigramLM& lm, const std::string& path) {
  nlohmann::json j;
  j["schema"] = 1;
  j["kind"] = "lm_bigram";
  j["vocab_hash"] = lm.vocab_hash;
  j["start"] = lm.start;
  j["params"] = {{"E", detail::matrix_to_json(lm.E)},
                 {"W1", detail::matrix_to_json(lm.W1)},
                 {"b1", detail::matrix_to_json(lm.b1)},
                 {"W2", detail::matrix_to_json(lm.W2)},
                 {"b2", detail::matrix_to_json(lm.b2)}};
  j["train_report"] = detail::report_to_json(lm.report);
  detail::write_json_file(j, path);
}

inline BigramLM load_lm(const std::string& path, const Vocabulary& vocab) {
  nlohmann::json j = detail::read_json_file(path);
  if (j.at("vocab_hash").get<std::uint64_t>() != vocab.hash())
    throw VocabularyMismatch("checkpoint vocabulary hash mismatch: " + path);
  BigramLM lm;
  lm.vocab_hash = j.at("vocab_hash").get<std::uint64_t>();
  lm.start = j.at("start").get<int>();
  const auto& params = j.at("params");
  lm.E = detail::matrix_from_json(params.at("E"));
  lm.W1 = detail::matrix_from_json(params.at("W1"));
  lm.b1 = detail::matrix_from_json(params.at("b1"));
  lm.W2 = detail::matrix_from_json(params.at("W2"));
  lm.b2 = detail::matrix_from_json(params.at("b2"));
  lm.report = detail::report_from_json(j.at("train_report"));
  return lm;
}

}  // namespace collider

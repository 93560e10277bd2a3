// Core vocabulary and sequence types shared by every attack: hard token
// sequences, soft (simplex-row) sequences, free logit matrices, and the
// simplex algebra (temperature softmax, label smoothing, top-k).
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace collider {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Logit value used to exclude a token from softmax selection. exp(kMaskLogit)
// underflows to exactly 0 in double, so masked tokens carry zero probability
// and zero gradient.
inline constexpr double kMaskLogit = -1e9;

// Tolerance for simplex membership checks.
inline constexpr double kSimplexTol = 1e-6;

// ---------------------------------------------------------------------------
// Errors

struct NumericalFailure : std::runtime_error {
  int iteration;
  explicit NumericalFailure(int iter)
      : std::runtime_error("non-finite gradient at iteration " +
                           std::to_string(iter)),
        iteration(iter) {}
};

struct CandidateExhaustion : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InfeasibleFilter : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VocabularyMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Vocabulary

/// Ordered token set with dense ids 0..|V|-1, a start and pad token, and an
/// optional corpus-frequency rank per token (1 = most frequent).
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary from_tokens(std::vector<std::string> tokens,
                                int start_id = 0, int pad_id = 0,
                                std::vector<int> freq_ranks = {}) {
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    if (v.tokens_.empty()) throw std::invalid_argument("empty vocabulary");
    for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) {
      if (!v.index_.emplace(v.tokens_[i], i).second)
        throw std::invalid_argument("duplicate token: " + v.tokens_[i]);
    }
    if (start_id < 0 || start_id >= v.size() || pad_id < 0 ||
        pad_id >= v.size())
      throw std::invalid_argument("special id out of range");
    v.start_id_ = start_id;
    v.pad_id_ = pad_id;
    if (!freq_ranks.empty()) v.set_frequency_ranks(std::move(freq_ranks));
    return v;
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  int start_id() const { return start_id_; }
  int pad_id() const { return pad_id_; }

  const std::string& token(int id) const {
    if (id < 0 || id >= size())
      throw std::invalid_argument("token id out of range");
    return tokens_[id];
  }

  std::optional<int> id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool has_frequency_ranks() const { return !freq_ranks_.empty(); }

  int frequency_rank(int id) const {
    if (!has_frequency_ranks())
      throw std::logic_error("vocabulary has no frequency ranks");
    return freq_ranks_.at(static_cast<std::size_t>(id));
  }

  void set_frequency_ranks(std::vector<int> ranks) {
    if (static_cast<int>(ranks.size()) != size())
      throw std::invalid_argument("rank count != vocabulary size");
    for (int r : ranks)
      if (r < 1) throw std::invalid_argument("frequency ranks must be >= 1");
    freq_ranks_ = std::move(ranks);
  }

  /// Ids of the F most frequent tokens (smallest rank value; ties by id).
  std::vector<int> top_frequent(int count) const {
    if (!has_frequency_ranks())
      throw std::logic_error("vocabulary has no frequency ranks");
    std::vector<int> ids(tokens_.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
      return freq_ranks_[a] != freq_ranks_[b] ? freq_ranks_[a] < freq_ranks_[b]
                                              : a < b;
    });
    ids.resize(std::min<std::size_t>(ids.size(), std::max(count, 0)));
    return ids;
  }

  /// FNV-1a over the token list; used to bind model checkpoints to the
  /// vocabulary they were trained with.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const char* data, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
      }
    };
    for (const auto& t : tokens_) {
      mix(t.data(), t.size());
      mix("\n", 1);
    }
    return h;
  }

  // One token per line, line number = id; optional tab-separated frequency
  // rank column.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
    for (int i = 0; i < size(); ++i) {
      out << tokens_[i];
      if (has_frequency_ranks()) out << '\t' << freq_ranks_[i];
      out << '\n';
    }
  }

  static Vocabulary load(const std::string& path, int start_id = 0,
                         int pad_id = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocabulary: " + path);
    std::vector<std::string> tokens;
    std::vector<int> ranks;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() && in.eof()) break;
      auto tab = line.find('\t');
      if (tab == std::string::npos) {
        tokens.push_back(line);
      } else {
        tokens.push_back(line.substr(0, tab));
        ranks.push_back(std::stoi(line.substr(tab + 1)));
      }
    }
    if (!ranks.empty() && ranks.size() != tokens.size())
      throw std::runtime_error("vocabulary file mixes ranked/unranked lines");
    return from_tokens(std::move(tokens), start_id, pad_id, std::move(ranks));
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::vector<int> freq_ranks_;
  int start_id_ = 0;
  int pad_id_ = 0;
};

// ---------------------------------------------------------------------------
// Sequences

/// Hard sequence of vocabulary token ids.
struct TokenSequence {
  std::vector<int> ids;

  TokenSequence() = default;
  explicit TokenSequence(std::vector<int> v) : ids(std::move(v)) {}
  TokenSequence(std::initializer_list<int> v) : ids(v) {}

  int length() const { return static_cast<int>(ids.size()); }
  bool empty() const { return ids.empty(); }

  void check_in_range(int vocab_size) const {
    for (int id : ids)
      if (id < 0 || id >= vocab_size)
        throw std::invalid_argument("token id out of range");
  }

  bool operator==(const TokenSequence& o) const { return ids == o.ids; }

  TokenSequence concat(const TokenSequence& o) const {
    TokenSequence r = *this;
    r.ids.insert(r.ids.end(), o.ids.begin(), o.ids.end());
    return r;
  }

  std::string detokenize(const Vocabulary& vocab) const {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) s += ' ';
      s += vocab.token(ids[i]);
    }
    return s;
  }
};

/// Sequence of probability rows over the vocabulary, one simplex point per
/// position. Rows are renormalized on construction; `strict` rejects rows
/// more than kSimplexTol off the simplex instead.
struct SoftSequence {
  Matrix rows;  // T x |V|

  SoftSequence() = default;

  static SoftSequence from_rows(Matrix m, bool strict = false) {
    if (m.rows() == 0 || m.cols() == 0)
      throw std::invalid_argument("soft sequence must be non-empty");
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double p = m(t, j);
        if (!std::isfinite(p) || p < -kSimplexTol)
          throw std::invalid_argument("soft row has negative or non-finite entry");
        sum += p;
      }
      if (strict && std::abs(sum - 1.0) > kSimplexTol)
        throw std::invalid_argument("soft row sum off simplex");
      if (sum <= 0.0)
        throw std::invalid_argument("soft row sums to zero");
      m.row(t) = (m.row(t).cwiseMax(0.0)) / sum;
    }
    SoftSequence s;
    s.rows = std::move(m);
    return s;
  }

  static SoftSequence one_hot(const TokenSequence& seq, int vocab_size) {
    seq.check_in_range(vocab_size);
    Matrix m = Matrix::Zero(seq.length(), vocab_size);
    for (int t = 0; t < seq.length(); ++t) m(t, seq.ids[t]) = 1.0;
    return from_rows(std::move(m));
  }

  int length() const { return static_cast<int>(rows.rows()); }
  int vocab_size() const { return static_cast<int>(rows.cols()); }
};

/// Free continuous variables optimized by the attacks, one logit row per
/// collision position.
struct LogitMatrix {
  Matrix values;  // T x |V|

  LogitMatrix() = default;
  LogitMatrix(int length, int vocab_size)
      : values(Matrix::Zero(length, vocab_size)) {}
  explicit LogitMatrix(Matrix m) : values(std::move(m)) {}

  int length() const { return static_cast<int>(values.rows()); }
  int vocab_size() const { return static_cast<int>(values.cols()); }
  bool all_finite() const { return values.allFinite(); }
};

// ---------------------------------------------------------------------------
// Attack configuration

struct DegenerationSpan {
  int start = 0;           // first constrained position
  int frequent_pool = 0;   // tokens drawn from the top-F frequency ranks
};

enum class TaskKind { Paraphrase, Retrieval, Response, Summarization };
enum class AttackKind { HotFlip, Aggressive, Regularized, Natural };

inline const char* to_string(TaskKind t) {
  switch (t) {
    case TaskKind::Paraphrase: return "paraphrase";
    case TaskKind::Retrieval: return "retrieval";
    case TaskKind::Response: return "response";
    case TaskKind::Summarization: return "summarization";
  }
  return "?";
}

inline const char* to_string(AttackKind a) {
  switch (a) {
    case AttackKind::HotFlip: return "hotflip";
    case AttackKind::Aggressive: return "aggressive";
    case AttackKind::Regularized: return "regularized";
    case AttackKind::Natural: return "natural";
  }
  return "?";
}

/// Attack hyperparameters. Presets mirror the per-task experiment table;
/// desk-scale runs shrink them through run configs.
struct AttackConfig {
  int beam_size = 5;        // B
  int topk = 10;            // K
  int iters = 30;           // N, inner gradient steps (hotflip: sweep budget)
  int length = 10;          // T
  double step_size = 1e-3;  // eta
  double temperature = 1.0; // tau
  double lm_weight = 0.0;   // beta, in [0,1]
  double label_smoothing = 0.1;  // epsilon
  int max_rounds = 10;
  double tol = 1e-3;
  std::optional<DegenerationSpan> span;
  std::uint64_t seed = 0;

  void validate(int vocab_size) const {
    if (beam_size < 1 || topk < 1 || iters < 0 || length < 1)
      throw std::invalid_argument("beam_size/topk/length must be positive");
    if (topk > vocab_size)
      throw std::invalid_argument("topk exceeds vocabulary size");
    if (step_size < 0 || !(temperature > 0))
      throw std::invalid_argument("step_size/temperature out of range");
    if (lm_weight < 0 || lm_weight > 1)
      throw std::invalid_argument("lm_weight must be in [0,1]");
    if (label_smoothing < 0 || label_smoothing >= 1)
      throw std::invalid_argument("label_smoothing must be in [0,1)");
    if (max_rounds < 1 || !(tol > 0))
      throw std::invalid_argument("max_rounds/tol out of range");
    if (span && (span->start < 0 || span->start >= length))
      throw std::invalid_argument("degeneration span start out of range");
    if (span && span->frequent_pool < 1)
      throw std::invalid_argument("degeneration frequent pool empty");
  }

  /// Published hyperparameter table, keyed by task. Paraphrase carries the
  /// MRPC column; hotflip shares the aggressive settings.
  static AttackConfig preset(TaskKind task, AttackKind attack) {
    AttackConfig c;
    auto set = [&c](int B, int K, int N, int T, double eta, double tau,
                    double beta) {
      c.beam_size = B; c.topk = K; c.iters = N; c.length = T;
      c.step_size = eta; c.temperature = tau; c.lm_weight = beta;
    };
    const bool aggr = attack == AttackKind::Aggressive ||
                      attack == AttackKind::HotFlip;
    switch (task) {
      case TaskKind::Paraphrase:
        if (aggr) set(10, 30, 30, 20, 0.001, 1.0, 0.0);
        else if (attack == AttackKind::Regularized) set(5, 15, 30, 30, 0.001, 1.0, 0.8);
        else set(10, 128, 5, 25, 0.001, 0.1, 0.05);
        break;
      case TaskKind::Retrieval:
        if (aggr) set(5, 50, 30, 30, 0.001, 1.0, 0.0);
        else if (attack == AttackKind::Regularized) set(5, 40, 30, 60, 0.001, 1.0, 0.85);
        else set(10, 150, 5, 35, 0.001, 0.1, 0.015);
        break;
      case TaskKind::Response:
        if (aggr) set(5, 30, 30, 15, 0.001, 1.0, 0.0);
        else if (attack == AttackKind::Regularized) set(5, 20, 30, 25, 0.001, 1.0, 0.8);
        else set(10, 128, 5, 20, 0.001, 0.1, 0.15);
        break;
      case TaskKind::Summarization:
        if (aggr) set(5, 10, 30, 15, 0.001, 1.0, 0.0);
        else if (attack == AttackKind::Regularized) set(5, 10, 30, 30, 0.001, 1.0, 0.8);
        else set(5, 64, 5, 20, 0.001, 1.0, 0.02);
        break;
    }
    if (attack == AttackKind::Regularized) {
      // Default degeneration span: second half of positions, frequent pool
      // of 1000 (callers cap it at |V|/2 when the vocabulary is smaller).
      c.span = DegenerationSpan{(c.length + 1) / 2, 1000};
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Simplex algebra

/// softmax(logits / tau). Max-shifted for overflow safety; as tau -> 0 the
/// output approaches the one-hot of the argmax.
inline Vector temperature_softmax(const Vector& logits, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("temperature must be > 0");
  if (logits.size() == 0 || !logits.allFinite())
    throw std::invalid_argument("logits must be non-empty and finite");
  Vector scaled = logits / tau;
  double m = scaled.maxCoeff();
  Vector e = (scaled.array() - m).exp();
  return e / e.sum();
}

/// Label-smoothed one-hot: 1-eps at `id`, eps/(|V|-1) elsewhere.
inline Vector label_smooth(int id, double eps, int vocab_size) {
  if (vocab_size < 2) throw std::invalid_argument("need |V| >= 2");
  if (id < 0 || id >= vocab_size)
    throw std::invalid_argument("token id out of range");
  if (eps < 0 || eps >= 1)
    throw std::invalid_argument("smoothing must be in [0,1)");
  Vector v = Vector::Constant(vocab_size, eps / (vocab_size - 1));
  v(id) = 1.0 - eps;
  return v;
}

/// Indices of the K largest entries with their values, descending; ties break
/// toward the lower index so runs are reproducible.
inline std::vector<std::pair<int, double>> top_k(const Vector& values, int k) {
  const int n = static_cast<int>(values.size());
  if (k < 1 || k > n) throw std::invalid_argument("top_k: K out of range");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](int a, int b) {
                      if (values(a) != values(b)) return values(a) > values(b);
                      return a < b;
                    });
  std::vector<std::pair<int, double>> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.emplace_back(idx[i], values(idx[i]));
  return out;
}

/// Argmax with low-index tie-breaking.
inline int argmax_index(const Vector& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

}  // namespace collider

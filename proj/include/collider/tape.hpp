// Small reverse-mode autodiff over Eigen matrices. A Ctx records a tape of
// matrix ops during the forward pass; backward() replays it in reverse. With
// recording disabled the same ops run value-only, which keeps beam-search
// scoring cheap.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace collider::ad {

using Matrix = Eigen::MatrixXd;

class Ctx {
 public:
  using V = int;

  explicit Ctx(bool recording = true) : rec_(recording) {}

  bool recording() const { return rec_; }

  void clear() { nodes_.clear(); }

  V leaf(Matrix m) { return push(std::move(m), {}); }

  const Matrix& val(V v) const { return nodes_[v].val; }
  const Matrix& grad(V v) const { return nodes_[v].grad; }

  double scalar(V v) const {
    const Matrix& m = nodes_[v].val;
    if (m.rows() != 1 || m.cols() != 1)
      throw std::logic_error("scalar() on non 1x1 node");
    return m(0, 0);
  }

  /// Seed d(out)/d(out) = 1 and sweep the tape in reverse.
  void backward(V out) {
    if (!rec_) throw std::logic_error("backward() on a non-recording ctx");
    if (nodes_[out].val.size() != 1)
      throw std::logic_error("backward() expects a 1x1 output");
    for (auto& n : nodes_) n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
    nodes_[out].grad(0, 0) = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back();
  }

  // -- ops -------------------------------------------------------------

  V mm(V a, V b) {
    Matrix out = val(a) * val(b);
    return push(std::move(out), [this, a, b](V o) {
      nodes_[a].grad.noalias() += nodes_[o].grad * nodes_[b].val.transpose();
      nodes_[b].grad.noalias() += nodes_[a].val.transpose() * nodes_[o].grad;
    });
  }

  V transpose(V a) {
    return push(val(a).transpose(), [this, a](V o) {
      nodes_[a].grad += nodes_[o].grad.transpose();
    });
  }

  V add(V a, V b) {
    return push(val(a) + val(b), [this, a, b](V o) {
      nodes_[a].grad += nodes_[o].grad;
      nodes_[b].grad += nodes_[o].grad;
    });
  }

  V sub(V a, V b) { return add(a, scale(b, -1.0)); }

  V scale(V a, double s) {
    return push(val(a) * s, [this, a, s](V o) {
      nodes_[a].grad += s * nodes_[o].grad;
    });
  }

  /// a: T x h, row: 1 x h broadcast-added to every row.
  V add_row_broadcast(V a, V row) {
    Matrix out = val(a).rowwise() + val(row).row(0);
    return push(std::move(out), [this, a, row](V o) {
      nodes_[a].grad += nodes_[o].grad;
      nodes_[row].grad.row(0) += nodes_[o].grad.colwise().sum();
    });
  }

  V hadamard(V a, V b) {
    return push(val(a).cwiseProduct(val(b)), [this, a, b](V o) {
      nodes_[a].grad += nodes_[o].grad.cwiseProduct(nodes_[b].val);
      nodes_[b].grad += nodes_[o].grad.cwiseProduct(nodes_[a].val);
    });
  }

  V softmax_rows(V a) {
    Matrix out = val(a);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      double m = out.row(r).maxCoeff();
      out.row(r) = (out.row(r).array() - m).exp();
      out.row(r) /= out.row(r).sum();
    }
    return push(std::move(out), [this, a](V o) {
      const Matrix& s = nodes_[o].val;
      const Matrix& dy = nodes_[o].grad;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        double inner = dy.row(r).dot(s.row(r));
        nodes_[a].grad.row(r) +=
            s.row(r).cwiseProduct((dy.row(r).array() - inner).matrix());
      }
    });
  }

  V log_softmax_rows(V a) {
    Matrix out = val(a);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      double m = out.row(r).maxCoeff();
      double lse = m + std::log((out.row(r).array() - m).exp().sum());
      out.row(r).array() -= lse;
    }
    return push(std::move(out), [this, a](V o) {
      const Matrix& logp = nodes_[o].val;
      const Matrix& dy = nodes_[o].grad;
      for (Eigen::Index r = 0; r < logp.rows(); ++r) {
        double total = dy.row(r).sum();
        nodes_[a].grad.row(r) +=
            dy.row(r) - total * logp.row(r).array().exp().matrix();
      }
    });
  }

  V tanh_(V a) {
    return push(val(a).array().tanh().matrix(), [this, a](V o) {
      const Matrix& y = nodes_[o].val;
      nodes_[a].grad +=
          nodes_[o].grad.cwiseProduct((1.0 - y.array().square()).matrix());
    });
  }

  V relu_(V a) {
    return push(val(a).cwiseMax(0.0), [this, a](V o) {
      nodes_[a].grad += nodes_[o].grad.cwiseProduct(
          (nodes_[a].val.array() > 0.0).cast<double>().matrix());
    });
  }

  V sigmoid_(V a) {
    Matrix out = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
    return push(std::move(out), [this, a](V o) {
      const Matrix& y = nodes_[o].val;
      nodes_[a].grad +=
          nodes_[o].grad.cwiseProduct((y.array() * (1.0 - y.array())).matrix());
    });
  }

  /// log(1 + exp(x)), elementwise and overflow-safe.
  V softplus_(V a) {
    Matrix out = val(a).unaryExpr([](double x) {
      return x > 30.0 ? x : std::log1p(std::exp(x));
    });
    return push(std::move(out), [this, a](V o) {
      Matrix sig =
          (1.0 / (1.0 + (-nodes_[a].val.array()).exp())).matrix();
      nodes_[a].grad += nodes_[o].grad.cwiseProduct(sig);
    });
  }

  V mean_rows(V a) {
    const double n = static_cast<double>(val(a).rows());
    Matrix out = val(a).colwise().mean();
    return push(std::move(out), [this, a, n](V o) {
      nodes_[a].grad += (nodes_[o].grad / n).replicate(nodes_[a].val.rows(), 1);
    });
  }

  V sum(V a) {
    Matrix out(1, 1);
    out(0, 0) = val(a).sum();
    return push(std::move(out), [this, a](V o) {
      nodes_[a].grad.array() += nodes_[o].grad(0, 0);
    });
  }

  /// sum(a .* b) as a 1x1 node.
  V dot(V a, V b) {
    Matrix out(1, 1);
    out(0, 0) = val(a).cwiseProduct(val(b)).sum();
    return push(std::move(out), [this, a, b](V o) {
      double d = nodes_[o].grad(0, 0);
      nodes_[a].grad += d * nodes_[b].val;
      nodes_[b].grad += d * nodes_[a].val;
    });
  }

  V row(V a, Eigen::Index i) {
    return push(val(a).row(i), [this, a, i](V o) {
      nodes_[a].grad.row(i) += nodes_[o].grad.row(0);
    });
  }

  V vstack(V a, V b) {
    Matrix out(val(a).rows() + val(b).rows(), val(a).cols());
    out << val(a), val(b);
    return push(std::move(out), [this, a, b](V o) {
      Eigen::Index ra = nodes_[a].val.rows();
      nodes_[a].grad += nodes_[o].grad.topRows(ra);
      nodes_[b].grad += nodes_[o].grad.bottomRows(nodes_[b].val.rows());
    });
  }

  /// Per-row layer norm with learned gain/bias (1 x h each).
  V layer_norm_rows(V a, V gain, V bias) {
    static constexpr double kEps = 1e-5;
    const Matrix& x = val(a);
    Matrix xhat(x.rows(), x.cols());
    Matrix inv_sigma(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double mu = x.row(r).mean();
      double var = (x.row(r).array() - mu).square().mean();
      double is = 1.0 / std::sqrt(var + kEps);
      xhat.row(r) = (x.row(r).array() - mu) * is;
      inv_sigma(r, 0) = is;
    }
    Matrix out =
        (xhat.array().rowwise() * val(gain).row(0).array()).rowwise() +
        val(bias).row(0).array();
    return push(std::move(out),
                [this, a, gain, bias, xhat, inv_sigma](V o) {
      const Matrix& dy = nodes_[o].grad;
      nodes_[gain].grad.row(0) += dy.cwiseProduct(xhat).colwise().sum();
      nodes_[bias].grad.row(0) += dy.colwise().sum();
      for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        Eigen::RowVectorXd dxhat =
            dy.row(r).cwiseProduct(nodes_[gain].val.row(0));
        double m1 = dxhat.mean();
        double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
        nodes_[a].grad.row(r) +=
            inv_sigma(r, 0) *
            (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
      }
    });
  }

 private:
  struct Node {
    Matrix val;
    Matrix grad;
    std::function<void()> back;
  };

  V push(Matrix m, std::function<void(V)> back) {
    V idx = static_cast<V>(nodes_.size());
    Node n;
    n.val = std::move(m);
    if (rec_ && back) n.back = [back, idx]() { back(idx); };
    nodes_.push_back(std::move(n));
    return idx;
  }

  bool rec_;
  std::vector<Node> nodes_;
};

}  // namespace collider::ad

// Adam with bias correction, usable for both descent (training) and ascent
// (the attacks' relaxed objectives).
#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace collider {

class AdamState {
 public:
  AdamState() = default;
  AdamState(Eigen::Index rows, Eigen::Index cols)
      : m_(Eigen::MatrixXd::Zero(rows, cols)),
        v_(Eigen::MatrixXd::Zero(rows, cols)) {}

  /// One step along `grad` (pass the raw gradient; `maximize` flips it).
  void step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, double lr,
            bool maximize = false, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8) {
    if (m_.size() == 0) {
      m_ = Eigen::MatrixXd::Zero(param.rows(), param.cols());
      v_ = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    }
    ++t_;
    const Eigen::MatrixXd g = maximize ? (-grad).eval() : grad;
    m_ = beta1 * m_ + (1.0 - beta1) * g;
    v_ = beta2 * v_ + (1.0 - beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1, t_);
    const double c2 = 1.0 - std::pow(beta2, t_);
    param.array() -=
        lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

 private:
  Eigen::MatrixXd m_, v_;
  int t_ = 0;
};

}  // namespace collider

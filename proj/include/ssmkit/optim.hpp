#pragma once

#include <vector>

#include "ssmkit/common.hpp"

namespace ssmkit {

/// Adam with bias correction; state is aligned with the parameter registry.
class Adam {
public:
  Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void init(const std::vector<NamedParam>& params) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.push_back(Mat::Zero(p.mat->rows(), p.mat->cols()));
      v_.push_back(Mat::Zero(p.mat->rows(), p.mat->cols()));
    }
    t_ = 0;
  }

  void step(const std::vector<NamedParam>& params, const std::vector<Mat>& grads) {
    require(params.size() == grads.size() && params.size() == m_.size(),
            "Adam::step: registry mismatch");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
      Mat mhat = m_[i] / bc1;
      Mat vhat = v_[i] / bc2;
      params[i].mat->array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
    }
  }

  double learning_rate() const { return lr_; }

private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

}  // namespace ssmkit

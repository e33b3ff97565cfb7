// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_OPTIM_HPP
#define UCTS_OPTIM_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "ucts/common.hpp"
#include "ucts/tensor.hpp"

namespace ucts {
namespace ad {

/// Cosine decay schedule: lr(e) = lr0 * (1 + cos(pi * e / total)) / 2.
inline double cosine_lr(int epoch, int total, double lr0) {
  if (total <= 0) throw ConfigError("cosine_lr: total epochs must be > 0");
  return lr0 * (1.0 + std::cos(std::numbers::pi * double(epoch) / total)) / 2.0;
}

/// AdamW with decoupled weight decay over a fixed parameter list. Parameter
/// tensors are updated in place from their grad slots; call zero_grad on the
/// params between steps.
template <typename T>
class AdamW {
 public:
  explicit AdamW(std::vector<Tensor<T>> params, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8,
                 double weight_decay = 0.0)
      : params_(std::move(params)),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps),
        weight_decay_(weight_decay) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t p = 0; p < params_.size(); ++p) {
      m_[p].assign(params_[p].numel(), 0.0);
      v_[p].assign(params_[p].numel(), 0.0);
    }
  }

  const std::vector<Tensor<T>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// One step at learning rate lr; parameters with empty grads are skipped.
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& param = params_[p];
      if (param.grad().empty()) continue;
      if (param.grad().size() != param.numel())
        throw ShapeError("AdamW: gradient/parameter size mismatch");
      auto& val = param.value();
      const auto& g = param.grad();
      for (std::size_t i = 0; i < val.size(); ++i) {
        const double gi = double(g[i]);
        m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * gi;
        v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * gi * gi;
        const double mhat = m_[p][i] / bc1;
        const double vhat = v_[p][i] / bc2;
        // decoupled decay: shrink the weight directly, not through the moments
        val[i] = T(double(val[i]) - lr * (mhat / (std::sqrt(vhat) + eps_) +
                                          weight_decay_ * double(val[i])));
      }
    }
  }

  int steps_taken() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;  // moments kept in double
  double beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
};

}  // namespace ad
}  // namespace ucts

#endif  // UCTS_OPTIM_HPP

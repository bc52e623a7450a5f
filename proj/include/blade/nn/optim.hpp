#pragma once

#include <cmath>
#include <vector>

#include "blade/core/error.hpp"
#include "blade/nn/layers.hpp"

namespace blade {
namespace nn {

/// Adam over a fixed list of parameters. Each optimizer owns the moment
/// buffers for exactly the parameters it was given; two models with separate
/// optimizers can never leak updates into each other.
template <class S>
class Adam {
 public:
  Adam() = default;
  explicit Adam(NamedParams<S> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, p] : params) {
      params_.push_back(p);
      m_.emplace_back(p->v.dims());
      v_.emplace_back(p->v.dims());
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  /// Scales gradients so their global l2 norm is at most max_norm.
  /// Returns the pre-clip norm.
  double clip_global_norm(double max_norm) {
    double sq = 0;
    for (auto* p : params_)
      for (long i = 0; i < p->g.size(); ++i) sq += static_cast<double>(p->g[i]) * p->g[i];
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
      S scale = static_cast<S>(max_norm / norm);
      for (auto* p : params_)
        for (long i = 0; i < p->g.size(); ++i) p->g[i] *= scale;
    }
    return norm;
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t k = 0; k < params_.size(); ++k) {
      Param<S>* p = params_[k];
      for (long i = 0; i < p->v.size(); ++i) {
        double g = p->g[i];
        double m = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
        double v = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
        m_[k][i] = static_cast<S>(m);
        v_[k][i] = static_cast<S>(v);
        p->v[i] -= static_cast<S>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

  long step_count() const { return t_; }
  size_t param_count() const { return params_.size(); }

 private:
  std::vector<Param<S>*> params_;
  std::vector<Tensor<S>> m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

/// Cosine decay from base_lr at epoch 0 to floor_frac * base_lr at the final
/// epoch (inclusive).
inline double cosine_lr(double base_lr, int epoch, int total_epochs, double floor_frac = 0.1) {
  if (total_epochs <= 1) return base_lr;
  double t = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  double lo = base_lr * floor_frac;
  return lo + (base_lr - lo) * 0.5 * (1.0 + std::cos(M_PI * t));
}

}  // namespace nn
}  // namespace blade

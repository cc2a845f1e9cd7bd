#pragma once

#include <cmath>

#include "routelab/seqmodel.hpp"

namespace routelab {

inline double global_norm(const PolicyParams& g) {
  double sq = 0.0;
  for (const TensorView& v : tensor_views(g))
    for (size_t i = 0; i < v.n; ++i) sq += v.data[i] * v.data[i];
  return std::sqrt(sq);
}

/// Scales the gradient in place so its global norm is at most max_norm.
inline void clip_global_norm(PolicyParams& g, double max_norm) {
  const double norm = global_norm(g);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (const TensorView& v : tensor_views(g))
    for (size_t i = 0; i < v.n; ++i) v.data[i] *= scale;
}

/// Adaptive-moment descent with bias correction. Feed it minimization
/// gradients; trainers doing ascent negate theirs first.
class Adam {
 public:
  explicit Adam(const PolicyParams& shape,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(zeros_like(shape)),
        v_(zeros_like(shape)),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {}

  void step(PolicyParams& params, const PolicyParams& grad, double lr) {
    ++t_;
    auto pv = tensor_views(params);
    auto gv = tensor_views(grad);
    auto mv = tensor_views(m_);
    auto vv = tensor_views(v_);
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t t = 0; t < pv.size(); ++t) {
      for (size_t i = 0; i < pv[t].n; ++i) {
        const double g = gv[t].data[i];
        double& m = mv[t].data[i];
        double& v = vv[t].data[i];
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g * g;
        pv[t].data[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps_);
      }
    }
  }

 private:
  PolicyParams m_, v_;
  long t_ = 0;
  double beta1_, beta2_, eps_;
};

}  // namespace routelab

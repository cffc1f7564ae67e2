#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "exgnas/autodiff.hpp"

namespace exgnas {

struct AdamConfig {
  double lr = 0.01;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with an L2 term (weight_decay * param) folded into the gradient.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<Parameter* const> params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
      auto& g = p->grad.data();
      bool any = false;
      for (double v : g) any = any || v != 0.0;
      if (!any) continue;
      auto& w = p->value.data();
      auto& m = p->adam_m.data();
      auto& v = p->adam_v.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] + cfg_.weight_decay * w[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

}  // namespace exgnas

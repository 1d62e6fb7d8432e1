#pragma once

#include <cmath>
#include <map>
#include <string>

#include "cqrsql/core/params.hpp"

namespace cqrsql {

struct AdamConfig {
  Real learning_rate = 5e-5;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
  Real clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

/// Adam with bias correction. Moment buffers are keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }

  void step(ParamStore& params, const GradMap& grads) {
    ++t_;
    Real scale = 1;
    if (cfg_.clip_norm > 0) {
      Real sq = 0;
      for (const auto& [_, g] : grads)
        for (Real v : g.data()) sq += v * v;
      const Real norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }
    if (cfg_.learning_rate == 0) return;
    const Real bc1 = 1 - std::pow(cfg_.beta1, static_cast<Real>(t_));
    const Real bc2 = 1 - std::pow(cfg_.beta2, static_cast<Real>(t_));
    for (const auto& [name, g] : grads) {
      auto& entry = params.entry(name);
      if (!entry.trainable) continue;
      Tensor& w = entry.value;
      auto [mit, _m] = m_.try_emplace(name, Tensor(w.shape(), 0.0));
      auto [vit, _v] = v_.try_emplace(name, Tensor(w.shape(), 0.0));
      Tensor& m = mit->second;
      Tensor& v = vit->second;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const Real gi = g[i] * scale;
        m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi;
        w[i] -= cfg_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon);
      }
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

inline void accumulate(GradMap& into, const GradMap& from) {
  for (const auto& [name, g] : from) {
    auto [it, inserted] = into.try_emplace(name, g);
    if (!inserted) it->second += g;
  }
}

}  // namespace cqrsql

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "cqrsql/core/graph.hpp"

namespace cqrsql {

struct GradCheckOptions {
  Real step = 1e-6;
  Real tolerance = 1e-6;
  /// Denominator floor of the relative error; keeps gradients that are zero
  /// up to rounding from producing unbounded ratios.
  Real magnitude_floor = 1e-4;
  /// Entries checked per tensor; 0 checks every entry.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  Real max_relative_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  Real worst_analytic = 0;
  Real worst_numeric = 0;
  bool passed = true;
};

/// Builds a scalar loss inside the supplied graph.
using LossFn = std::function<Var(Graph&, const ParamStore&)>;

inline Real evaluate_loss(const LossFn& fn, const ParamStore& params) {
  Graph g(false);
  Real v = fn(g, params).item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

/// Compares reverse-mode gradients against central differences
/// (L(w+h) - L(w-h)) / 2h for every trainable entry (or a seeded sample).
inline GradCheckReport grad_check(const LossFn& fn, ParamStore& params, const GradCheckOptions& opt = {}) {
  if (opt.step < 1e-7 || opt.step > 1e-5) throw NumericError("grad_check: step must lie in [1e-7, 1e-5]");
  GradCheckReport report;

  GradMap analytic;
  {
    Graph g(true);
    Var loss = fn(g, params);
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
    g.backward(loss);
    analytic = g.param_grads();
  }

  std::mt19937_64 rng(opt.seed);
  for (const auto& [name, entry] : params.entries()) {
    if (!entry.trainable) continue;
    const std::size_t n = entry.value.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (opt.max_entries_per_param && n > opt.max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_entries_per_param);
      std::sort(idx.begin(), idx.end());
    }
    auto it = analytic.find(name);
    for (std::size_t k : idx) {
      Tensor& w = params.get(name);
      const Real saved = w[k];
      w[k] = saved + opt.step;
      const Real up = evaluate_loss(fn, params);
      w[k] = saved - opt.step;
      const Real down = evaluate_loss(fn, params);
      w[k] = saved;
      const Real numeric = (up - down) / (2 * opt.step);
      const Real a = it == analytic.end() ? 0.0 : it->second[k];
      const Real denom = std::max({std::abs(a), std::abs(numeric), opt.magnitude_floor});
      const Real rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error || report.worst_param.empty()) {
        if (rel >= report.max_relative_error) {
          report.max_relative_error = rel;
          report.worst_param = name;
          report.worst_index = k;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  report.passed = report.max_relative_error < opt.tolerance;
  return report;
}

}  // namespace cqrsql

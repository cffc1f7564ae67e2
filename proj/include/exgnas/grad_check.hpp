#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "exgnas/autodiff.hpp"

namespace exgnas {

struct GradCheckOptions {
  double tol = 1e-4;
  double step = 1e-5;
  /// Denominator floor of the relative error, so near-zero gradients are
  /// compared on an absolute scale.
  double floor = 1e-6;
  /// 0 checks every entry; otherwise a seeded sample of this many entries per input.
  std::size_t max_entries_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds a scalar on a tape from input handles.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares reverse-mode gradients of `f` with central finite differences.
inline GradCheckReport grad_check(const TapeFunction& f, const std::vector<Matrix>& inputs,
                                  const GradCheckOptions& opt = {}) {
  auto evaluate = [&](const std::vector<Matrix>& xs) {
    Tape t;
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(t.constant(x));
    const Matrix& out = t.value(f(t, vars));
    if (out.size() != 1) throw DimensionError("grad_check", out.rows(), out.cols(), 1, 1);
    if (!std::isfinite(out[0])) throw NonFiniteError("grad_check: non-finite function value");
    return out[0];
  };

  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  Var out = f(tape, vars);
  tape.backward(out);

  std::mt19937_64 rng(opt.seed);
  GradCheckReport report;
  std::vector<Matrix> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Matrix& analytic = tape.grad(vars[i]);
    std::vector<std::size_t> entries(inputs[i].size());
    std::iota(entries.begin(), entries.end(), 0);
    if (opt.max_entries_per_input && entries.size() > opt.max_entries_per_input) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opt.max_entries_per_input);
    }
    for (std::size_t k : entries) {
      const double orig = probe[i][k];
      probe[i][k] = orig + opt.step;
      const double fp = evaluate(probe);
      probe[i][k] = orig - opt.step;
      const double fm = evaluate(probe);
      probe[i][k] = orig;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double a = analytic[k];
      if (!std::isfinite(a)) throw NonFiniteError("grad_check: non-finite gradient");
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
      ++report.entries_checked;
    }
  }
  report.passed = report.max_rel_error <= opt.tol;
  return report;
}

}  // namespace exgnas

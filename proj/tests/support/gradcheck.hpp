#pragma once

// Central finite-difference oracle for gradient checks. Test-only; it only
// evaluates forward passes, never the tape's backward rules.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "wisdom/tensor.hpp"

namespace wisdom::testing {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8),
/// maximised over the inputs that require grad.
inline double gradcheck(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  f(inputs).backward();
  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<double> numeric(t.numel());
    auto x = t.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double keep = x[i];
      double fp, fm;
      {
        NoGradGuard ng;
        x[i] = keep + h;
        fp = f(inputs).item();
        x[i] = keep - h;
        fm = f(inputs).item();
      }
      x[i] = keep;
      numeric[i] = (fp - fm) / (2.0 * h);
    }
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8}));
  }
  return worst;
}

}  // namespace wisdom::testing

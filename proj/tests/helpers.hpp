#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fgbp/tensor.hpp"

namespace fgbp::testing {

// Central finite difference of a scalar-valued closure with respect to one
// storage location. The closure must recompute the forward value from the
// current contents of the parameter tensors on every call, which keeps this
// oracle independent of the autodiff path it is used to check.
inline double central_difference(const std::function<double()>& f, double* x,
                                 double eps = 1e-5) {
  const double x0 = *x;
  *x = x0 + eps;
  const double fp = f();
  *x = x0 - eps;
  const double fm = f();
  *x = x0;
  return (fp - fm) / (2.0 * eps);
}

inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

// Compares analytic gradients (aligned with params) against central
// differences of `f`. Returns the max relative error over all elements.
inline double max_grad_error(
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const std::function<double()>& f, const std::vector<Tensor>& analytic,
    double eps = 1e-5) {
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor* t = params[p].second;
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double num = central_difference(f, &(*t)[i], eps);
      worst = std::max(worst, rel_error(analytic[p][i], num));
    }
  }
  return worst;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace fgbp::testing

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "tsseg/random.hpp"
#include "tsseg/tensor.hpp"

namespace fd {

using tsseg::Tensor;

inline Tensor<double> random_tensor(tsseg::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  tsseg::Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Relative error with a floor on the denominator, so components whose true
// gradient is zero are judged on absolute error instead.
inline double rel_err(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Worst relative error of `analytic` against central differences of `loss`
// with respect to every element of `x`.
inline double check(Tensor<double>& x, const Tensor<double>& analytic, const std::function<double()>& loss,
                    double h = 1e-6, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * h), floor));
  }
  return worst;
}

// sum(out * w) is the scalar whose gradient wrt out is w.
inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace fd

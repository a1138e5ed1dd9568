#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

namespace oracle {

// Central difference (f(x + h) - f(x - h)) / 2h along coordinate i of v.
template <typename Vec>
double central_diff(const std::function<double(const Vec&)>& f, Vec v, int i, double h) {
  const double x0 = v.data()[i];
  v.data()[i] = x0 + h;
  const double fp = f(v);
  v.data()[i] = x0 - h;
  const double fm = f(v);
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace doc {

// 1 / (1 + exp(-x)) without overflow, clamped so the result stays strictly
// inside (0, 1) even where the exact value rounds to 0 or 1.
inline double stable_sigmoid(double x) noexcept {
  constexpr double kLow = std::numeric_limits<double>::denorm_min();
  constexpr double kHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kLow, kHigh);
}

// log(1 + exp(x))
inline double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double log_sum_exp(std::span<const double> xs) noexcept {
  const double top = *std::max_element(xs.begin(), xs.end());
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - top);
  return top + std::log(acc);
}

}  // namespace doc

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace cpdguard {

// MAD-to-sigma consistency constant for Gaussian noise, fixed rather than
// recomputed from the normal quantile so outputs are byte-reproducible.
inline constexpr double kMadToSigma = 1.4826;
inline constexpr double kDefaultEpsilon = 1e-6;

/// Median by selection; even lengths return the midpoint of the two central order statistics.
inline double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  const auto mid_it = v.begin() + static_cast<std::ptrdiff_t>(mid);
  std::nth_element(v.begin(), mid_it, v.end());
  const double upper = *mid_it;
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid_it);
  return 0.5 * (lower + upper);
}

/// Raw (unscaled) median absolute deviation around `center`.
inline double median_abs_deviation(std::span<const double> values, double center) {
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double x : values) dev.push_back(std::fabs(x - center));
  return median(dev);
}

struct BaselineStats {
  double mu0 = 0.0;
  double sigma0 = 1.0;
  double epsilon = kDefaultEpsilon;
  std::size_t m = 0;
  // True when the scaled MAD fell below epsilon and sigma0 was floored.
  bool floor_applied = false;
};

/// Robust location/scale of the system-prompt entropy sample.
inline BaselineStats fit_baseline(std::span<const double> sys_entropy, double epsilon = kDefaultEpsilon) {
  if (sys_entropy.empty()) throw std::invalid_argument("fit_baseline: empty system-prompt sample");
  if (!(epsilon > 0.0)) throw std::invalid_argument("fit_baseline: epsilon must be > 0");
  BaselineStats b;
  b.epsilon = epsilon;
  b.m = sys_entropy.size();
  b.mu0 = median(sys_entropy);
  const double scaled_mad = kMadToSigma * median_abs_deviation(sys_entropy, b.mu0);
  b.floor_applied = !(scaled_mad >= epsilon);
  b.sigma0 = b.floor_applied ? epsilon : scaled_mad;
  return b;
}

/// Z_t = (H_t - mu0) / sigma0.
inline std::vector<double> standardize(std::span<const double> values, const BaselineStats& baseline) {
  std::vector<double> z;
  z.reserve(values.size());
  for (double h : values) z.push_back((h - baseline.mu0) / baseline.sigma0);
  return z;
}

}  // namespace cpdguard

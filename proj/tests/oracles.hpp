#pragma once

// Closed-form references shared by the unit and acceptance suites. None of
// these call into the library beyond reading model state.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace bartspl::testing {

/// Log marginal likelihood of one leaf, mu ~ N(0, t2), y_i ~ N(mu, s2),
/// up to terms common to every tree on the same data.
inline double leaf_marginal(std::span<const double> y, double t2, double s2) {
  const double n = static_cast<double>(y.size());
  double s = 0.0;
  for (double v : y) s += v;
  return -0.5 * std::log((s2 + n * t2) / s2) + t2 * s * s / (2.0 * s2 * (s2 + n * t2));
}

/// Posterior probability of the single-split tree against the stump for one
/// binary covariate: priors alpha vs 1 - alpha (children cannot split further).
inline double split_posterior(std::span<const double> y, std::span<const double> x, double alpha, double t2,
                              double s2) {
  std::vector<double> left, right;
  for (std::size_t i = 0; i < y.size(); ++i) (x[i] <= 0.5 ? left : right).push_back(y[i]);
  const double log_split = std::log(alpha) + leaf_marginal(left, t2, s2) + leaf_marginal(right, t2, s2);
  const double log_stump = std::log1p(-alpha) + leaf_marginal(y, t2, s2);
  return 1.0 / (1.0 + std::exp(log_stump - log_split));
}

/// Monte Carlo standard error of the mean of an autocorrelated series.
inline double batch_means_se(std::span<const double> series, std::size_t batches = 50) {
  const std::size_t len = series.size() / batches;
  std::vector<double> means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < len; ++i) means[b] += series[b * len + i];
    means[b] /= static_cast<double>(len);
  }
  double m = 0.0;
  for (double v : means) m += v;
  m /= static_cast<double>(batches);
  double ss = 0.0;
  for (double v : means) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
}

/// Normal-equations least squares.
inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& W, const Eigen::VectorXd& y) {
  return (W.transpose() * W).ldlt().solve(W.transpose() * y);
}

/// Truncated-power restricted cubic spline term c_j(z), written out term by term.
inline double rcs_term(double z, const std::vector<double>& t, std::size_t j) {
  const auto cube = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
  const std::size_t K = t.size();
  const double tK = t[K - 1], tK1 = t[K - 2];
  const double num = cube(z - t[j]) - cube(z - tK1) * (tK - t[j]) / (tK - tK1) + cube(z - tK) * (tK1 - t[j]) / (tK - tK1);
  return num / ((tK - t[0]) * (tK - t[0]));
}

/// Pointwise support: some b+1 consecutive sorted group scores together
/// with x span less than a.
inline bool window_supported(double x, std::vector<double> s, double a, int b) {
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i + static_cast<std::size_t>(b) < s.size(); ++i) {
    const double hi = std::max(x, s[i + static_cast<std::size_t>(b)]);
    const double lo = std::min(x, s[i]);
    if (hi - lo < a) return true;
  }
  return false;
}

/// Linear-interpolation quantile straight from the definition h = (n-1)p.
inline double quantile_formula(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]);
}

}  // namespace bartspl::testing

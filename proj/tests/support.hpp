#pragma once

#include "bartspl/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace bartspl::testing {

/// Hand-rolled generators for property tests. Each case gets its own stream.
struct Gen {
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  Rng rng;

  double uniform(double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1))); }
  std::vector<double> uniforms(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }
  std::vector<double> normals(std::size_t n, double mean = 0.0, double sd = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(mean, sd);
    return v;
  }
  /// 0/1 vector with at least one of each value.
  std::vector<std::uint8_t> exposure(std::size_t n, double p = 0.5) {
    std::vector<std::uint8_t> e(n);
    for (auto& x : e) x = rng.bernoulli(p) ? 1 : 0;
    e[0] = 1;
    e[n - 1] = 0;
    return e;
  }
  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
  }
};

inline double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace bartspl::testing

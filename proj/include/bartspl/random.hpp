#pragma once

#include <cstdint>
#include <random>

namespace bartspl {

/// Stateless 64-bit mixer used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream` under `master`. Streams are independent of
/// the order in which they are requested.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Random source for all samplers. Wraps a 64-bit Mersenne twister; every
/// variate is generated here so that a fixed seed reproduces a run exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                       // (0, 1)
  double normal();                        // N(0, 1)
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double exponential();                   // Exp(1)
  double gamma(double shape);             // Gamma(shape, 1)
  double chi_square(double dof) { return 2.0 * gamma(0.5 * dof); }
  /// Draw from InvGamma(shape, scale): scale / Gamma(shape, 1).
  double inverse_gamma(double shape, double scale) { return scale / gamma(shape); }
  std::size_t index(std::size_t n);       // uniform on {0, ..., n-1}
  bool bernoulli(double p) { return uniform() < p; }

  /// N(mean, 1) truncated to (0, inf) when `positive`, else (-inf, 0].
  double truncated_normal_unit(double mean, bool positive);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// N(0,1) truncated to [lower, inf). Uses inversion close to the mode and
/// exponential rejection in the far tail.
double sample_lower_truncated_std_normal(double lower, Rng& rng);

}  // namespace bartspl

#include "bartspl/random.hpp"

#include <cmath>

namespace bartspl {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return u + 0x1.0p-54;
}

double Rng::normal() { return normal_(engine_); }

double Rng::exponential() { return -std::log(uniform()); }

double Rng::gamma(double shape) {
  // Marsaglia-Tsang; shape < 1 boosted via U^(1/shape).
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::size_t Rng::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

double sample_lower_truncated_std_normal(double lower, Rng& rng) {
  if (lower <= 0.0) {
    for (;;) {
      const double z = rng.normal();
      if (z >= lower) return z;
    }
  }
  if (lower < 0.5) {
    // Acceptance of naive rejection is still > 0.3 here.
    for (;;) {
      const double z = rng.normal();
      if (z >= lower) return z;
    }
  }
  // Robert (1995) translated-exponential proposal with optimal rate.
  const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  for (;;) {
    const double z = lower + rng.exponential() / rate;
    const double log_accept = -0.5 * (z - rate) * (z - rate);
    if (std::log(rng.uniform()) <= log_accept) return z;
  }
}

double Rng::truncated_normal_unit(double mean, bool positive) {
  if (positive) return mean + sample_lower_truncated_std_normal(-mean, *this);
  return mean - sample_lower_truncated_std_normal(mean, *this);
}

}  // namespace bartspl

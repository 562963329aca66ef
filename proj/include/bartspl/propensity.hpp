#pragma once

#include "bartspl/bart.hpp"
#include "bartspl/core_data.hpp"
#include "bartspl/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bartspl {

/// Scores are clipped to [kPsClip, 1 - kPsClip].
inline constexpr double kPsClip = 1e-6;

enum class PsModelKind {
  logistic,
  bart_probit,
  provided,         // the dataset's `ps` column
  true_bayes_rule,  // simulation only: needs the generating mixture
  covariate_column, // a covariate used directly as the balancing score
};

const char* to_string(PsModelKind k);
PsModelKind parse_ps_model(const std::string& s);

struct LogisticOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;  // relative deviance change
  /// Quadratic penalty on the slopes (the intercept is never penalized).
  double ridge = 0.0;
};

struct LogisticFit {
  Eigen::VectorXd coef;  // intercept first
  Eigen::VectorXd se;
  std::vector<double> probs;
  double deviance = 0.0;
  int iterations = 0;
};

/// Maximum-likelihood logistic regression of `e` on [1, X] by iteratively
/// reweighted least squares. Throws ConvergenceError on non-convergence or
/// (near) complete separation.
LogisticFit fit_logistic(const Eigen::MatrixXd& X, std::span<const std::uint8_t> e, const LogisticOptions& options = {});

/// Main-effects logistic propensity score, clipped.
std::vector<double> fit_logistic_ps(const ObservationalDataset& data, const LogisticOptions& options = {});

/// Posterior mean of Phi(G(x)) from a probit forest on the covariates.
std::vector<double> fit_bart_probit_ps(const ObservationalDataset& data, const BartHyperParams& hyper, Rng& rng);

struct CovariateLaw {
  enum class Kind { bernoulli, gaussian } kind = Kind::gaussian;
  double p = 0.5;         // bernoulli success probability
  double mean = 0.0;      // gaussian
  double variance = 1.0;  // gaussian

  static CovariateLaw bernoulli(double p) { return {Kind::bernoulli, p, 0.0, 1.0}; }
  static CovariateLaw gaussian(double mean, double variance) { return {Kind::gaussian, 0.5, mean, variance}; }
  double log_density(double x) const;
  double sample(Rng& rng) const;
};

/// Two-group generative law with independent coordinates within each group.
struct MixtureDensitySpec {
  double prevalence = 0.5;  // P(E = 1)
  std::vector<CovariateLaw> exposed;
  std::vector<CovariateLaw> unexposed;

  void validate() const;
};

/// P(E=1 | x) = prevalence f1(x) / (prevalence f1(x) + (1 - prevalence) f0(x)).
double true_ps_bayes_rule(const MixtureDensitySpec& spec, std::span<const double> x);

struct PropensityModelSpec {
  PsModelKind kind = PsModelKind::logistic;
  BartHyperParams probit;                 // bart_probit sampler settings
  LogisticOptions logistic;
  /// Retry with this ridge penalty when the unpenalized fit fails (0 disables).
  double ridge_fallback = 0.0;
  std::size_t column = 0;                 // covariate_column
  const MixtureDensitySpec* mixture = nullptr;  // true_bayes_rule
};

struct PropensityResult {
  std::vector<double> score;
  bool is_probability = true;  // false for covariate_column
  std::vector<std::string> notes;
};

/// Dispatches on spec.kind.
PropensityResult estimate_propensity(const ObservationalDataset& data, const PropensityModelSpec& spec, Rng& rng);

}  // namespace bartspl

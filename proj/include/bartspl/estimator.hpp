#pragma once

#include "bartspl/bart.hpp"
#include "bartspl/core_data.hpp"
#include "bartspl/overlap.hpp"
#include "bartspl/propensity.hpp"
#include "bartspl/random.hpp"
#include "bartspl/spline.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bartspl {

enum class ScoreKind {
  probability,  // a propensity score, strictly inside (0, 1)
  covariate,    // a covariate used in place of a propensity score
};

/// A dataset with its balancing score and region partition.
struct CausalSample {
  ObservationalDataset data;
  std::vector<double> score;
  ScoreKind score_kind = ScoreKind::probability;
  RegionPartition partition;

  std::vector<std::size_t> ro() const { return partition.ro_units(); }
  std::vector<std::size_t> rn() const { return partition.rn_units(); }
  /// Throws ValidationError when lengths disagree or a probability score
  /// leaves (0, 1).
  void validate() const;
};

CausalSample make_causal_sample(ObservationalDataset data, std::vector<double> score, ScoreKind kind,
                                RegionPartition partition);

enum class Method { bart_spl, untrimmed_bart, trimmed_bart };
/// Command-line spelling: bartspl, untrimmed-bart, trimmed-bart.
const char* to_string(Method m);
Method parse_method(const std::string& s);

struct BartSplConfig {
  OverlapParams overlap;
  ScreenMode screen_mode = ScreenMode::both_tails;
  PropensityModelSpec propensity;
  BartHyperParams bart;  // outcome model; burn_in and draws (M) are taken from here
  SmoothingConfig smoothing;
  int bootstrap_b = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CausalEstimates {
  Method method = Method::bart_spl;
  PosteriorDraws draws;
  EstimateSummary sample;
  EstimateSummary population;
  RegionPartition partition;
  std::vector<std::string> warnings;

  /// Posterior mean and interval of each unit's effect, ordered as
  /// draws.ro_units followed by draws.rn_units.
  std::vector<EstimateSummary> individual(double level = 0.95) const;
};

/// Estimates the score, partitions, and folds interior RN gaps into the RO
/// (warning when they exceed interior_gap_max).
CausalSample prepare_sample(const ObservationalDataset& data, const BartSplConfig& config,
                            std::vector<std::string>* warnings = nullptr);

/// Imputation-stage design: columns (E, score, X). The score column is left
/// out when it duplicates a covariate.
Eigen::MatrixXd imputation_design(const CausalSample& sample);

CausalEstimates run_bart_spl(const CausalSample& sample, const BartSplConfig& config);
CausalEstimates run_untrimmed_bart(const CausalSample& sample, const BartSplConfig& config);
/// Refuses (EstimationError) when the RO has fewer than 20 units.
CausalEstimates run_trimmed_bart(const CausalSample& sample, const BartSplConfig& config);
CausalEstimates run_method(Method method, const CausalSample& sample, const BartSplConfig& config);

/// (sum of RO effects + sum of RN effects) / N.
double sample_ace_draw(std::span<const double> delta_ro, std::span<const double> delta_rn);

/// B Dirichlet(1,...,1)-weighted means of `delta`.
std::vector<double> bootstrap_means(std::span<const double> delta, int B, Rng& rng);

/// One of B Bayesian-bootstrap means chosen uniformly at random. Only the
/// selected weight vector is generated: the B means are exchangeable, so
/// the selected one has the law of a single Dirichlet-weighted mean.
double population_ace_draw(std::span<const double> delta, int B, Rng& rng);

/// Posterior mean with a percentile interval (type-7 quantiles).
EstimateSummary summarize(std::span<const double> draws, double level = 0.95, Estimand estimand = Estimand::sample);

/// Linear-interpolation empirical quantile.
double quantile_type7(std::vector<double> values, double prob);

}  // namespace bartspl

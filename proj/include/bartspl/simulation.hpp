#pragma once

#include "bartspl/core_data.hpp"
#include "bartspl/estimator.hpp"
#include "bartspl/propensity.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bartspl {

/// Simulated designs:
///   S31A(c), S31B(c)  two confounders, true / misspecified logistic score
///   S32(n_extra)      10 confounders plus n_extra unrelated normals
///   S33A(v,w), S33B   one frozen confounder used directly as the score
///   B2A(c), B2B(c)    binary-outcome analogues of S31A / S31B
enum class Family { S31A, S31B, S32, S33A, S33B, B2A, B2B };

const char* to_string(Family f);
Family parse_family(const std::string& s);

struct DgpSpec {
  Family family = Family::S31A;
  double c = 0.0;
  int n_extra = 0;
  double v = 1.4;
  double w = 1.96;
  int n = 500;

  void validate() const;
  OutcomeType outcome_type() const;
  bool frozen_covariates() const { return family == Family::S33A || family == Family::S33B; }
  std::string label() const;
};

/// Covariate laws of the design (prevalence 0.5).
MixtureDensitySpec mixture_for(const DgpSpec& spec);

/// Conditional means of Y(1), Y(0) given x (probabilities for binary designs).
std::pair<double, double> potential_means(const DgpSpec& spec, std::span<const double> x);

struct SimReplicate {
  ObservationalDataset dataset;
  std::vector<double> y1, y0;          // realized potential outcomes
  std::vector<double> mean1, mean0;    // conditional means (binary: probabilities)
  std::vector<double> effect;          // true individual effects mean1 - mean0
  PsModelKind ps_rule = PsModelKind::logistic;
};

/// Replicate `replicate` under `master_seed`. For S33 the covariate and
/// exposure vectors depend on master_seed only; the noise varies per replicate.
SimReplicate generate_dataset(const DgpSpec& spec, std::uint64_t master_seed, std::size_t replicate);

struct OracleValue {
  double value = 0.0;
  double se = 0.0;
};

/// Population average effect. Monte Carlo over `draws` covariate vectors from
/// the 50/50 mixture, or the exact average over the frozen covariates for S33.
OracleValue oracle_true_ace(const DgpSpec& spec, std::uint64_t master_seed, std::size_t draws = 10'000'000);

struct StudyConfig {
  DgpSpec dgp;
  std::vector<Method> methods{Method::bart_spl};
  int n_reps = 200;          // accepted replicates wanted
  int max_attempts = 0;      // 0: 20 * n_reps
  /// Reject replicates whose screened RN exceeds interior_gap_max (otherwise
  /// fold it into the RO and keep the replicate).
  bool enforce_screening = true;
  BartSplConfig estimator;   // seed is replaced per replicate
  std::uint64_t seed = 1;
  std::size_t oracle_draws = 10'000'000;
};

/// Family defaults: absolute a = 0.1, b = 7, right-tail screening for the
/// two-confounder, high-dimensional and binary designs; a = 0.1 * range,
/// b = 10, both tails kept and no rejection for S33.
StudyConfig default_study_config(const DgpSpec& spec);

struct MethodResult {
  Method method = Method::bart_spl;
  double point = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double sample_point = 0.0;
  double effect_min = 0.0;  // range of the individual effect draws
  double effect_max = 0.0;
  std::string error;  // non-empty when the method failed on this replicate
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  bool accepted = false;
  double pi = 0.0;
  std::size_t screened_units = 0;
  std::vector<MethodResult> results;
};

struct MethodMetrics {
  Method method = Method::bart_spl;
  std::size_t n = 0;
  double abs_bias = 0.0;
  double pct_bias = 0.0;
  double coverage = 0.0;
  double mse = 0.0;
};

/// abs bias |mean(est) - truth|, percent bias 100 abs / |truth|,
/// coverage of [lower, upper], MSE mean (est - truth)^2.
MethodMetrics compute_metrics(Method method, std::span<const double> estimates, std::span<const double> lower,
                              std::span<const double> upper, double truth);

struct MetricsReport {
  DgpSpec dgp;
  OracleValue truth;
  std::size_t attempted = 0;
  std::size_t accepted = 0;
  double mean_pi = 0.0;  // over accepted replicates
  std::vector<MethodMetrics> methods;
  std::vector<ReplicateRecord> replicates;  // every attempt, accepted or not
  std::vector<std::string> notes;

  const MethodMetrics& metrics(Method m) const;
  /// Population estimates of `m` over accepted replicates where it succeeded.
  std::vector<double> estimates(Method m) const;
};

using ProgressFn = std::function<void(const ReplicateRecord&)>;

/// Throws EstimationError when no replicate is accepted.
MetricsReport run_study(const StudyConfig& config, const ProgressFn& progress = {});

/// method,abs_bias,pct_bias,coverage,mse
void write_metrics_csv(std::ostream& out, const MetricsReport& report);
/// One row per (replicate, method) attempt, plus rows for rejected replicates.
void write_replicates_csv(std::ostream& out, const MetricsReport& report);

}  // namespace bartspl

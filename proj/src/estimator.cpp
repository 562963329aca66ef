#include "bartspl/estimator.hpp"

#include "bartspl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bartspl {

namespace {

// Every method draws from the same stream, so with an empty RN the three
// methods reproduce one another exactly.
enum Stream : std::uint64_t { kPropensityStream = 1, kMethodStream = 11 };

struct ImputationDraw {
  std::vector<double> delta;   // effect per training unit, Y(1) - Y(0)
  std::vector<double> ystar1;  // observed or imputed Y(1) (binary: thresholded)
  std::vector<double> ystar0;
};

/// Fits the outcome forest on `train` and calls on_draw(m, draw) for each
/// of the M kept sweeps.
template <class OnDraw>
void run_imputation(const CausalSample& sample, const std::vector<std::size_t>& train, const BartSplConfig& config,
                    Rng& rng, OnDraw&& on_draw) {
  const auto& data = sample.data;
  const bool binary = data.outcome_type() == OutcomeType::binary;
  const Eigen::MatrixXd full = imputation_design(sample);
  const auto T = train.size();
  Eigen::MatrixXd design(static_cast<Eigen::Index>(T), full.cols());
  std::vector<double> y(T);
  std::vector<std::uint8_t> e(T);
  for (std::size_t k = 0; k < T; ++k) {
    design.row(static_cast<Eigen::Index>(k)) = full.row(static_cast<Eigen::Index>(train[k]));
    y[k] = data.outcome()[train[k]];
    e[k] = data.exposure()[train[k]];
  }
  Eigen::MatrixXd flipped = design;
  for (Eigen::Index k = 0; k < flipped.rows(); ++k) flipped(k, 0) = 1.0 - flipped(k, 0);

  BartModel model(design, y, config.bart, binary ? ResponseKind::probit : ResponseKind::continuous);
  const auto handle = model.track_rows(flipped);
  for (int it = 0; it < config.bart.burn_in; ++it) model.sweep(rng);

  ImputationDraw d;
  d.delta.resize(T);
  d.ystar1.resize(T);
  d.ystar0.resize(T);
  for (int m = 0; m < config.bart.draws; ++m) {
    model.sweep(rng);
    if (binary) {
      const auto obs = model.fitted();
      const auto cf = model.tracked_fit(handle);
      for (std::size_t k = 0; k < T; ++k) {
        const double p_obs = normal_cdf(obs[k]);
        const double p_cf = normal_cdf(cf[k]);
        const double imputed = p_cf > 0.5 ? 1.0 : 0.0;
        d.delta[k] = e[k] ? p_obs - p_cf : p_cf - p_obs;
        d.ystar1[k] = e[k] ? y[k] : imputed;
        d.ystar0[k] = e[k] ? imputed : y[k];
      }
    } else {
      const auto mis = draw_missing_outcomes(model, handle, rng);
      for (std::size_t k = 0; k < T; ++k) {
        d.delta[k] = e[k] ? y[k] - mis[k] : mis[k] - y[k];
        d.ystar1[k] = e[k] ? y[k] : mis[k];
        d.ystar0[k] = e[k] ? mis[k] : y[k];
      }
    }
    on_draw(m, d);
  }
}

void require_both_groups(const CausalSample& sample, const std::vector<std::size_t>& units, const char* what) {
  bool seen[2] = {false, false};
  for (auto i : units) seen[sample.data.exposure()[i] ? 1 : 0] = true;
  if (!seen[0] || !seen[1]) {
    throw EstimationError(std::string(what) + " lacks exposure group " + (seen[0] ? "1" : "0") +
                          "; counterfactual imputation is impossible");
  }
}

CausalEstimates finish(Method method, PosteriorDraws draws, const CausalSample& sample, const BartSplConfig& config,
                       bool trimmed, std::vector<std::string> warnings) {
  CausalEstimates out;
  out.method = method;
  out.sample = summarize(draws.delta_s, config.level, trimmed ? Estimand::trimmed_sample : Estimand::sample);
  out.population =
      summarize(draws.delta_p, config.level, trimmed ? Estimand::trimmed_population : Estimand::population);
  out.draws = std::move(draws);
  out.partition = sample.partition;
  out.warnings = std::move(warnings);
  return out;
}

/// Shared by the untrimmed and trimmed comparators: BART imputation on
/// `units`, marginalized over the same units.
CausalEstimates run_plain_bart(Method method, const CausalSample& sample, const std::vector<std::size_t>& units,
                               const BartSplConfig& config, Rng& rng) {
  require_both_groups(sample, units, method == Method::trimmed_bart ? "the RO" : "the sample");
  const auto M = static_cast<Eigen::Index>(config.bart.draws);
  PosteriorDraws draws;
  draws.ro_units = units;
  draws.delta_ro.resize(M, static_cast<Eigen::Index>(units.size()));
  draws.delta_rn.resize(M, 0);
  draws.delta_s.resize(static_cast<std::size_t>(M));
  draws.delta_p.resize(static_cast<std::size_t>(M));
  run_imputation(sample, units, config, rng, [&](int m, const ImputationDraw& d) {
    for (std::size_t k = 0; k < d.delta.size(); ++k) draws.delta_ro(m, static_cast<Eigen::Index>(k)) = d.delta[k];
    draws.delta_s[static_cast<std::size_t>(m)] = sample_ace_draw(d.delta, {});
    draws.delta_p[static_cast<std::size_t>(m)] = population_ace_draw(d.delta, config.bootstrap_b, rng);
  });
  return finish(method, std::move(draws), sample, config, method == Method::trimmed_bart, {});
}

}  // namespace

void CausalSample::validate() const {
  const auto n = data.size();
  if (score.size() != n) throw ValidationError("score length does not match the dataset");
  if (partition.labels.size() != n) throw ValidationError("partition does not cover the dataset");
  if (score_kind == ScoreKind::probability) {
    for (double s : score) {
      if (!(s > 0.0 && s < 1.0)) throw ValidationError("propensity scores must lie strictly inside (0,1)");
    }
  }
}

CausalSample make_causal_sample(ObservationalDataset data, std::vector<double> score, ScoreKind kind,
                                RegionPartition partition) {
  CausalSample s{std::move(data), std::move(score), kind, std::move(partition)};
  s.validate();
  return s;
}

const char* to_string(Method m) {
  switch (m) {
    case Method::bart_spl: return "bartspl";
    case Method::untrimmed_bart: return "untrimmed-bart";
    case Method::trimmed_bart: return "trimmed-bart";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "bartspl" || s == "bart_spl") return Method::bart_spl;
  if (s == "untrimmed-bart" || s == "untrimmed_bart") return Method::untrimmed_bart;
  if (s == "trimmed-bart" || s == "trimmed_bart") return Method::trimmed_bart;
  throw ValidationError("unknown method '" + s + "' (expected bartspl, untrimmed-bart or trimmed-bart)");
}

void BartSplConfig::validate() const {
  overlap.validate();
  bart.validate();
  smoothing.validate();
  if (bootstrap_b < 1) throw ValidationError("bootstrap draws B must be at least 1");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("credible level must lie in (0,1)");
}

std::vector<EstimateSummary> CausalEstimates::individual(double level) const {
  std::vector<EstimateSummary> out;
  for (const auto* block : {&draws.delta_ro, &draws.delta_rn}) {
    for (Eigen::Index c = 0; c < block->cols(); ++c) {
      const Eigen::VectorXd col = block->col(c);
      out.push_back(summarize(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), level,
                              Estimand::individual));
    }
  }
  return out;
}

CausalSample prepare_sample(const ObservationalDataset& data, const BartSplConfig& config,
                            std::vector<std::string>* warnings) {
  config.validate();
  Rng rng(derive_seed(config.seed, kPropensityStream));
  auto ps = estimate_propensity(data, config.propensity, rng);
  auto partition = partition_sample(ps.score, data.exposure(), config.overlap);
  auto screened = screen_interior_gaps(partition, ps.score, config.overlap, config.screen_mode, /*force=*/true);
  if (warnings) {
    warnings->insert(warnings->end(), ps.notes.begin(), ps.notes.end());
    warnings->insert(warnings->end(), screened.partition.warnings.begin(), screened.partition.warnings.end());
  }
  return make_causal_sample(data, std::move(ps.score), ps.is_probability ? ScoreKind::probability : ScoreKind::covariate,
                            std::move(screened.partition));
}

Eigen::MatrixXd imputation_design(const CausalSample& sample) {
  const auto& X = sample.data.covariates();
  const auto n = static_cast<Eigen::Index>(sample.data.size());
  const Eigen::Map<const Eigen::VectorXd> score(sample.score.data(), n);
  bool duplicate = false;
  for (Eigen::Index j = 0; j < X.cols() && !duplicate; ++j) duplicate = X.col(j) == score;
  Eigen::MatrixXd D(n, 1 + (duplicate ? 0 : 1) + X.cols());
  for (Eigen::Index i = 0; i < n; ++i) D(i, 0) = sample.data.exposure()[static_cast<std::size_t>(i)];
  Eigen::Index col = 1;
  if (!duplicate) D.col(col++) = score;
  D.rightCols(X.cols()) = X;
  return D;
}

CausalEstimates run_bart_spl(const CausalSample& sample, const BartSplConfig& config) {
  config.validate();
  sample.validate();
  const auto ro = sample.ro();
  const auto rn = sample.rn();
  require_both_groups(sample, ro, "the RO");
  const auto& data = sample.data;
  const auto type = data.outcome_type();
  const auto& X = data.covariates();
  Rng rng(derive_seed(config.seed, kMethodStream));
  std::vector<std::string> warnings;

  // Smoothing arms: RN units are routed by their observed exposure.
  SplineArm::Inputs base;
  Eigen::MatrixXd ro_x(static_cast<Eigen::Index>(ro.size()), X.cols());
  for (std::size_t k = 0; k < ro.size(); ++k) {
    base.ro_score.push_back(sample.score[ro[k]]);
    ro_x.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(ro[k]));
  }
  base.ro_covariates = ro_x;
  base.fit_mask = trim_mask(base.ro_score, config.smoothing.trim_fraction);

  std::vector<SplineArm> arms;
  std::vector<int> arm_exposure;
  std::vector<std::vector<std::size_t>> arm_rn_pos;  // positions within rn
  for (int arm = 1; arm >= 0; --arm) {
    std::vector<std::size_t> pos;
    for (std::size_t k = 0; k < rn.size(); ++k) {
      if (data.exposure()[rn[k]] == arm) pos.push_back(k);
    }
    if (pos.empty()) continue;
    SplineArm::Inputs in = base;
    in.rn_covariates.resize(static_cast<Eigen::Index>(pos.size()), X.cols());
    for (std::size_t k = 0; k < pos.size(); ++k) {
      const auto unit = rn[pos[k]];
      in.rn_score.push_back(sample.score[unit]);
      in.rn_covariates.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(unit));
      in.rn_ystar.push_back(data.outcome()[unit]);
      in.rn_distance.push_back(sample.partition.distance[unit]);
    }
    arms.emplace_back(std::move(in), type, config.smoothing, &warnings);
    arm_exposure.push_back(arm);
    arm_rn_pos.push_back(std::move(pos));
  }

  const auto M = static_cast<Eigen::Index>(config.bart.draws);
  PosteriorDraws draws;
  draws.ro_units = ro;
  draws.rn_units = rn;
  draws.delta_ro.resize(M, static_cast<Eigen::Index>(ro.size()));
  draws.delta_rn.resize(M, static_cast<Eigen::Index>(rn.size()));
  draws.delta_s.resize(static_cast<std::size_t>(M));
  draws.delta_p.resize(static_cast<std::size_t>(M));
  std::vector<double> full(data.size());
  std::vector<double> delta_rn(rn.size());
  std::size_t max_dropped = 0;

  run_imputation(sample, ro, config, rng, [&](int m, const ImputationDraw& d) {
    const auto [lo, hi] = std::minmax_element(d.delta.begin(), d.delta.end());
    const double t_o = *hi - *lo;
    for (std::size_t a = 0; a < arms.size(); ++a) {
      const auto& ystar = arm_exposure[a] == 1 ? d.ystar1 : d.ystar0;
      const Eigen::VectorXd pred = arms[a].draw(ystar, d.delta, t_o, rng);
      max_dropped = std::max(max_dropped, arms[a].last_dropped_columns());
      for (std::size_t k = 0; k < arm_rn_pos[a].size(); ++k) {
        delta_rn[arm_rn_pos[a][k]] = pred[static_cast<Eigen::Index>(k)];
      }
    }
    for (std::size_t k = 0; k < ro.size(); ++k) draws.delta_ro(m, static_cast<Eigen::Index>(k)) = d.delta[k];
    for (std::size_t k = 0; k < rn.size(); ++k) draws.delta_rn(m, static_cast<Eigen::Index>(k)) = delta_rn[k];
    draws.delta_s[static_cast<std::size_t>(m)] = sample_ace_draw(d.delta, delta_rn);
    std::copy(d.delta.begin(), d.delta.end(), full.begin());
    std::copy(delta_rn.begin(), delta_rn.end(), full.begin() + static_cast<std::ptrdiff_t>(ro.size()));
    draws.delta_p[static_cast<std::size_t>(m)] = population_ace_draw(full, config.bootstrap_b, rng);
  });
  if (max_dropped > 0) {
    warnings.push_back("smoothing design: dropped up to " + std::to_string(max_dropped) + " collinear column(s)");
  }
  return finish(Method::bart_spl, std::move(draws), sample, config, false, std::move(warnings));
}

CausalEstimates run_untrimmed_bart(const CausalSample& sample, const BartSplConfig& config) {
  config.validate();
  sample.validate();
  std::vector<std::size_t> all(sample.data.size());
  std::iota(all.begin(), all.end(), 0);
  Rng rng(derive_seed(config.seed, kMethodStream));
  return run_plain_bart(Method::untrimmed_bart, sample, all, config, rng);
}

CausalEstimates run_trimmed_bart(const CausalSample& sample, const BartSplConfig& config) {
  config.validate();
  sample.validate();
  const auto ro = sample.ro();
  if (ro.size() < 20) {
    throw EstimationError("trimmed BART refused: the RO holds " + std::to_string(ro.size()) +
                          " units (at least 20 required)");
  }
  Rng rng(derive_seed(config.seed, kMethodStream));
  return run_plain_bart(Method::trimmed_bart, sample, ro, config, rng);
}

CausalEstimates run_method(Method method, const CausalSample& sample, const BartSplConfig& config) {
  switch (method) {
    case Method::bart_spl: return run_bart_spl(sample, config);
    case Method::untrimmed_bart: return run_untrimmed_bart(sample, config);
    case Method::trimmed_bart: return run_trimmed_bart(sample, config);
  }
  throw ValidationError("unknown method");
}

double sample_ace_draw(std::span<const double> delta_ro, std::span<const double> delta_rn) {
  const auto n = delta_ro.size() + delta_rn.size();
  if (n == 0) throw ValidationError("no effects to average");
  long double total = 0.0L;
  for (double v : delta_ro) total += v;
  for (double v : delta_rn) total += v;
  return static_cast<double>(total / static_cast<long double>(n));
}

namespace {

double dirichlet_weighted_mean(std::span<const double> delta, Rng& rng) {
  double num = 0.0, den = 0.0;
  for (double v : delta) {
    const double g = rng.exponential();
    num += g * v;
    den += g;
  }
  return num / den;
}

}  // namespace

std::vector<double> bootstrap_means(std::span<const double> delta, int B, Rng& rng) {
  if (delta.empty()) throw ValidationError("no effects to bootstrap");
  std::vector<double> out(static_cast<std::size_t>(std::max(B, 0)));
  for (double& v : out) v = dirichlet_weighted_mean(delta, rng);
  return out;
}

double population_ace_draw(std::span<const double> delta, int B, Rng& rng) {
  if (delta.empty()) throw ValidationError("no effects to bootstrap");
  if (B < 1) throw ValidationError("bootstrap draws B must be at least 1");
  if (delta.size() == 1) return delta[0];
  return dirichlet_weighted_mean(delta, rng);
}

double quantile_type7(std::vector<double> values, double prob) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

EstimateSummary summarize(std::span<const double> draws, double level, Estimand estimand) {
  if (draws.empty()) throw ValidationError("cannot summarize an empty draw vector");
  EstimateSummary s;
  s.estimand = estimand;
  s.level = level;
  s.point = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
  std::vector<double> v(draws.begin(), draws.end());
  const double tail = 0.5 * (1.0 - level);
  s.ci_lower = quantile_type7(v, tail);
  s.ci_upper = quantile_type7(std::move(v), 1.0 - tail);
  return s;
}

}  // namespace bartspl

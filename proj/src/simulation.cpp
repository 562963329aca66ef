#include "bartspl/simulation.hpp"

#include "bartspl/error.hpp"
#include "bartspl/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace bartspl {

namespace {

constexpr double kS33NoiseVariance = 0.06;
constexpr std::uint64_t kFrozenStream = 0x5333;
constexpr std::uint64_t kOracleStream = 0x0AC1E;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t replicate_seed(std::uint64_t master, std::size_t replicate) {
  return derive_seed(master, static_cast<std::uint64_t>(replicate) + 1);
}

/// Draws the covariate matrix with the first n/2 rows exposed.
Eigen::MatrixXd draw_covariates(const MixtureDensitySpec& mix, int n, Rng& rng) {
  const auto p = static_cast<Eigen::Index>(mix.exposed.size());
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i) {
    const auto& laws = i < n / 2 ? mix.exposed : mix.unexposed;
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = laws[static_cast<std::size_t>(j)].sample(rng);
  }
  return X;
}

}  // namespace

const char* to_string(Family f) {
  switch (f) {
    case Family::S31A: return "S31A";
    case Family::S31B: return "S31B";
    case Family::S32: return "S32";
    case Family::S33A: return "S33A";
    case Family::S33B: return "S33B";
    case Family::B2A: return "B2A";
    case Family::B2B: return "B2B";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  for (Family f : {Family::S31A, Family::S31B, Family::S32, Family::S33A, Family::S33B, Family::B2A, Family::B2B}) {
    if (s == to_string(f)) return f;
  }
  throw ValidationError("unknown family '" + s + "' (expected S31A, S31B, S32, S33A, S33B, B2A or B2B)");
}

void DgpSpec::validate() const {
  if (n < 4) throw ValidationError("simulated sample size must be at least 4");
  if (n_extra < 0) throw ValidationError("n_extra must be non-negative");
  if (!std::isfinite(c) || !std::isfinite(v)) throw ValidationError("c and v must be finite");
  if (!(w > 0.0)) throw ValidationError("w (a variance) must be positive");
  if ((family == Family::S31A || family == Family::B2A) && !(1.25 + 0.1 * c > 0.0)) {
    throw ValidationError("c must satisfy 1.25 + 0.1 c > 0");
  }
}

OutcomeType DgpSpec::outcome_type() const {
  return family == Family::B2A || family == Family::B2B ? OutcomeType::binary : OutcomeType::continuous;
}

std::string DgpSpec::label() const {
  std::ostringstream s;
  s << to_string(family);
  switch (family) {
    case Family::S32: s << "(n_extra=" << n_extra << ")"; break;
    case Family::S33A:
    case Family::S33B: s << "(v=" << v << ",w=" << w << ")"; break;
    default: s << "(c=" << c << ")"; break;
  }
  return s.str();
}

MixtureDensitySpec mixture_for(const DgpSpec& spec) {
  spec.validate();
  MixtureDensitySpec m;
  m.prevalence = 0.5;
  using L = CovariateLaw;
  switch (spec.family) {
    case Family::S31A:
    case Family::B2A:
      m.exposed = {L::bernoulli(0.5), L::gaussian(2.0 + spec.c, 1.25 + 0.1 * spec.c)};
      m.unexposed = {L::bernoulli(0.4), L::gaussian(1.0, 1.0)};
      break;
    case Family::S31B:
    case Family::B2B:
      m.exposed = {L::bernoulli(0.5), L::gaussian(2.0 + spec.c, 4.0)};
      m.unexposed = {L::bernoulli(0.4), L::gaussian(1.0, 1.0)};
      break;
    case Family::S32:
      for (int j = 0; j < 5; ++j) {
        m.exposed.push_back(L::bernoulli(0.45));
        m.unexposed.push_back(L::bernoulli(0.4));
      }
      for (int j = 0; j < 5; ++j) {
        m.exposed.push_back(L::gaussian(2.0, 4.0));
        m.unexposed.push_back(L::gaussian(1.3, 1.0));
      }
      for (int j = 0; j < spec.n_extra; ++j) {
        m.exposed.push_back(L::gaussian(0.0, 1.0));
        m.unexposed.push_back(L::gaussian(0.0, 1.0));
      }
      break;
    case Family::S33A:
    case Family::S33B:
      m.exposed = {L::gaussian(2.5, 4.0)};
      m.unexposed = {L::gaussian(spec.v, spec.w)};
      break;
  }
  return m;
}

std::pair<double, double> potential_means(const DgpSpec& spec, std::span<const double> x) {
  switch (spec.family) {
    case Family::S31A: {
      const double x1 = x[0], x2 = x[1];
      return {-3.0 * sigmoid(10.0 * (x2 - 1.0)) + 0.25 * x1 - x1 * x2, -1.5 * x2};
    }
    case Family::S31B: {
      const double x1 = x[0], x2 = x[1];
      return {3.0 * sigmoid(10.0 * (x2 - 1.0)) + 0.25 * x1 - 0.1 * x1 * x2 + 0.5, 0.2 * x2 + 0.1 * x2 * x2 + 1.0};
    }
    case Family::S32: {
      double bin = 0.0, cont = 0.0;
      for (int j = 0; j < 5; ++j) bin += x[static_cast<std::size_t>(j)];
      for (int j = 5; j < 10; ++j) cont += x[static_cast<std::size_t>(j)];
      const double y0 = 0.5 * bin + 15.0 * sigmoid(8.0 * x[5] - 1.0) + x[6] + x[7] + x[8] + x[9] - 5.0;
      return {bin - 0.5 * cont, y0};
    }
    case Family::S33A:
    case Family::S33B: {
      const double z = x[0];
      double poly = z + z * z / 2.0;
      if (spec.family == Family::S33B) poly += z * z * z / 6.0;
      return {sigmoid(z - 1.0), 1.5 + poly / 20.0};
    }
    case Family::B2A: {
      const double x1 = x[0], x2 = x[1];
      return {sigmoid(std::exp(0.25 * x2) + 0.5 * x1 * x2), sigmoid(0.2 * x2 * x2 * x2 + 0.25 * x1)};
    }
    case Family::B2B: {
      const double x1 = x[0], x2 = x[1];
      const double d = x2 - 2.0;
      return {sigmoid(3.0 * sigmoid(8.0 * x2 - 1.0) + 0.25 * x1 - 2.0), sigmoid(0.85 * d + d * d)};
    }
  }
  return {0.0, 0.0};
}

SimReplicate generate_dataset(const DgpSpec& spec, std::uint64_t master_seed, std::size_t replicate) {
  const auto mix = mixture_for(spec);
  Rng rng(derive_seed(replicate_seed(master_seed, replicate), 1));
  Eigen::MatrixXd X;
  if (spec.frozen_covariates()) {
    Rng frozen(derive_seed(master_seed, kFrozenStream));
    X = draw_covariates(mix, spec.n, frozen);
  } else {
    X = draw_covariates(mix, spec.n, rng);
  }
  const auto n = static_cast<std::size_t>(spec.n);
  const auto p = static_cast<std::size_t>(X.cols());
  const bool binary = spec.outcome_type() == OutcomeType::binary;

  RawTable table;
  table.names = {"y", "e"};
  for (std::size_t j = 0; j < p; ++j) table.names.push_back("x" + std::to_string(j + 1));
  table.columns.assign(table.names.size(), std::vector<double>(n));

  std::vector<double> y1s, y0s, means1, means0, effects;
  std::vector<double> row(p);
  const double noise_sd = std::sqrt(kS33NoiseVariance);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) row[j] = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const auto [m1, m0] = potential_means(spec, row);
    double y1 = m1, y0 = m0;
    if (binary) {
      y1 = rng.bernoulli(m1) ? 1.0 : 0.0;
      y0 = rng.bernoulli(m0) ? 1.0 : 0.0;
    } else if (spec.frozen_covariates()) {
      y1 += noise_sd * rng.normal();
      y0 += noise_sd * rng.normal();
    }
    const bool exposed = i < n / 2;
    table.columns[0][i] = exposed ? y1 : y0;
    table.columns[1][i] = exposed ? 1.0 : 0.0;
    for (std::size_t j = 0; j < p; ++j) table.columns[2 + j][i] = row[j];
    y1s.push_back(y1);
    y0s.push_back(y0);
    means1.push_back(m1);
    means0.push_back(m0);
    effects.push_back(m1 - m0);
  }
  ValidationOptions opts;
  opts.outcome_type = spec.outcome_type();
  SimReplicate rep{validate_dataset(table, opts), std::move(y1s), std::move(y0s), std::move(means1),
                   std::move(means0), std::move(effects), PsModelKind::logistic};
  switch (spec.family) {
    case Family::S31A:
    case Family::B2A: rep.ps_rule = PsModelKind::true_bayes_rule; break;
    case Family::S33A:
    case Family::S33B: rep.ps_rule = PsModelKind::covariate_column; break;
    default: rep.ps_rule = PsModelKind::logistic; break;
  }
  return rep;
}

OracleValue oracle_true_ace(const DgpSpec& spec, std::uint64_t master_seed, std::size_t draws) {
  auto mix = mixture_for(spec);
  if (spec.frozen_covariates()) {
    Rng frozen(derive_seed(master_seed, kFrozenStream));
    const Eigen::MatrixXd X = draw_covariates(mix, spec.n, frozen);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double x = X(i, 0);
      const auto [m1, m0] = potential_means(spec, std::span<const double>(&x, 1));
      sum += m1 - m0;
    }
    return {sum / static_cast<double>(X.rows()), 0.0};
  }
  if (draws < 2) throw ValidationError("oracle needs at least 2 draws");
  // Only the first ten S32 covariates enter the outcome laws.
  if (spec.family == Family::S32) {
    mix.exposed.resize(10);
    mix.unexposed.resize(10);
  }
  Rng rng(derive_seed(master_seed, kOracleStream));
  std::vector<double> x(mix.exposed.size());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    const auto& laws = rng.bernoulli(mix.prevalence) ? mix.exposed : mix.unexposed;
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = laws[j].sample(rng);
    const auto [m1, m0] = potential_means(spec, x);
    const double d = m1 - m0;
    sum += d;
    sum_sq += d * d;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

StudyConfig default_study_config(const DgpSpec& spec) {
  spec.validate();
  StudyConfig cfg;
  cfg.dgp = spec;
  if (spec.frozen_covariates()) {
    cfg.estimator.overlap.a_fraction = 0.1;
    cfg.estimator.overlap.b = 10;
    cfg.estimator.screen_mode = ScreenMode::both_tails;
    cfg.enforce_screening = false;
  } else {
    cfg.estimator.overlap.a_absolute = 0.1;
    cfg.estimator.overlap.b = 7;
    cfg.estimator.screen_mode = ScreenMode::right_tail_only;
    cfg.enforce_screening = true;
  }
  if (spec.family == Family::S32) cfg.estimator.propensity.ridge_fallback = 1e-6;
  return cfg;
}

MethodMetrics compute_metrics(Method method, std::span<const double> estimates, std::span<const double> lower,
                              std::span<const double> upper, double truth) {
  if (lower.size() != estimates.size() || upper.size() != estimates.size()) {
    throw ValidationError("metric inputs have different lengths");
  }
  MethodMetrics m;
  m.method = method;
  m.n = estimates.size();
  if (m.n == 0) {
    m.abs_bias = m.pct_bias = m.coverage = m.mse = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  double sum = 0.0, sq = 0.0, covered = 0.0;
  for (std::size_t r = 0; r < m.n; ++r) {
    sum += estimates[r];
    sq += (estimates[r] - truth) * (estimates[r] - truth);
    covered += (lower[r] <= truth && truth <= upper[r]) ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(m.n);
  m.abs_bias = std::abs(sum / n - truth);
  m.pct_bias = 100.0 * m.abs_bias / std::abs(truth);
  m.coverage = covered / n;
  m.mse = sq / n;
  return m;
}

const MethodMetrics& MetricsReport::metrics(Method m) const {
  for (const auto& x : methods) {
    if (x.method == m) return x;
  }
  throw ValidationError(std::string("method ") + to_string(m) + " was not part of the study");
}

std::vector<double> MetricsReport::estimates(Method m) const {
  std::vector<double> out;
  for (const auto& rec : replicates) {
    if (!rec.accepted) continue;
    for (const auto& r : rec.results) {
      if (r.method == m && r.error.empty()) out.push_back(r.point);
    }
  }
  return out;
}

MetricsReport run_study(const StudyConfig& config, const ProgressFn& progress) {
  config.dgp.validate();
  config.estimator.validate();
  if (config.n_reps < 1) throw ValidationError("replicate count must be at least 1");
  if (config.methods.empty()) throw ValidationError("no methods requested");
  const int max_attempts = config.max_attempts > 0 ? config.max_attempts : 20 * config.n_reps;

  MetricsReport report;
  report.dgp = config.dgp;
  report.truth = oracle_true_ace(config.dgp, config.seed, config.oracle_draws);
  const auto mixture = mixture_for(config.dgp);
  const auto& params = config.estimator.overlap;
  double pi_sum = 0.0;

  for (int r = 0; r < max_attempts && report.accepted < static_cast<std::size_t>(config.n_reps); ++r) {
    const auto rep_index = static_cast<std::size_t>(r);
    const auto rep_seed = replicate_seed(config.seed, rep_index);
    auto rep = generate_dataset(config.dgp, config.seed, rep_index);
    ++report.attempted;

    ReplicateRecord rec;
    rec.replicate = rep_index;
    PropensityModelSpec ps = config.estimator.propensity;
    ps.kind = rep.ps_rule;
    ps.mixture = &mixture;
    ps.column = 0;
    Rng ps_rng(derive_seed(rep_seed, 3));
    PropensityResult score;
    try {
      score = estimate_propensity(rep.dataset, ps, ps_rng);
    } catch (const ConvergenceError& err) {
      report.notes.push_back("replicate " + std::to_string(r) + ": " + err.what());
      report.replicates.push_back(rec);
      if (progress) progress(rec);
      continue;
    }
    const auto partition = partition_sample(score.score, rep.dataset.exposure(), params);
    const auto screened = screen_interior_gaps(partition, score.score, params, config.estimator.screen_mode,
                                               !config.enforce_screening);
    rec.screened_units = screened.screened_units;
    rec.pi = screened.partition.pi;
    rec.accepted = screened.accepted || !config.enforce_screening;
    if (!rec.accepted) {
      report.replicates.push_back(rec);
      if (progress) progress(rec);
      continue;
    }
    ++report.accepted;
    pi_sum += rec.pi;

    const auto sample = make_causal_sample(rep.dataset, std::move(score.score),
                                           score.is_probability ? ScoreKind::probability : ScoreKind::covariate,
                                           screened.partition);
    BartSplConfig est = config.estimator;
    est.seed = derive_seed(rep_seed, 2);
    for (Method m : config.methods) {
      MethodResult res;
      res.method = m;
      try {
        const auto out = run_method(m, sample, est);
        res.point = out.population.point;
        res.ci_lower = out.population.ci_lower;
        res.ci_upper = out.population.ci_upper;
        res.sample_point = out.sample.point;
        res.effect_min = std::numeric_limits<double>::infinity();
        res.effect_max = -res.effect_min;
        for (const auto* d : {&out.draws.delta_ro, &out.draws.delta_rn}) {
          if (d->size() == 0) continue;
          res.effect_min = std::min(res.effect_min, d->minCoeff());
          res.effect_max = std::max(res.effect_max, d->maxCoeff());
        }
      } catch (const Error& err) {
        res.error = err.what();
      }
      rec.results.push_back(res);
    }
    report.replicates.push_back(rec);
    if (progress) progress(report.replicates.back());
  }
  if (report.accepted == 0) {
    throw EstimationError("no replicate accepted out of " + std::to_string(report.attempted) +
                          " attempts (screening or propensity failures)");
  }
  report.mean_pi = pi_sum / static_cast<double>(report.accepted);

  for (Method m : config.methods) {
    std::vector<double> est, lo, hi;
    std::size_t failures = 0;
    for (const auto& rec : report.replicates) {
      if (!rec.accepted) continue;
      for (const auto& res : rec.results) {
        if (res.method != m) continue;
        if (!res.error.empty()) {
          ++failures;
          continue;
        }
        est.push_back(res.point);
        lo.push_back(res.ci_lower);
        hi.push_back(res.ci_upper);
      }
    }
    if (failures > 0) {
      report.notes.push_back(std::string(to_string(m)) + " failed on " + std::to_string(failures) + " replicate(s)");
    }
    report.methods.push_back(compute_metrics(m, est, lo, hi, report.truth.value));
  }
  return report;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << "method,abs_bias,pct_bias,coverage,mse\n";
  for (const auto& m : report.methods) {
    out << to_string(m.method) << ',' << format_double(m.abs_bias) << ',' << format_double(m.pct_bias) << ','
        << format_double(m.coverage) << ',' << format_double(m.mse) << '\n';
  }
}

void write_replicates_csv(std::ostream& out, const MetricsReport& report) {
  out << "replicate,accepted,pi,screened_units,method,estimate,ci_lower,ci_upper,sample_estimate,truth,covered,effect_min,effect_max,error\n";
  const std::string truth = format_double(report.truth.value);
  for (const auto& rec : report.replicates) {
    const std::string head = std::to_string(rec.replicate) + ',' + (rec.accepted ? "1" : "0") + ',' +
                             format_double(rec.pi) + ',' + std::to_string(rec.screened_units) + ',';
    if (rec.results.empty()) {
      out << head << ",NA,NA,NA,NA," << truth << ",NA,NA,NA,\n";
      continue;
    }
    for (const auto& res : rec.results) {
      out << head << to_string(res.method) << ',';
      if (res.error.empty()) {
        const bool covered = res.ci_lower <= report.truth.value && report.truth.value <= res.ci_upper;
        out << format_double(res.point) << ',' << format_double(res.ci_lower) << ',' << format_double(res.ci_upper)
            << ',' << format_double(res.sample_point) << ',' << truth << ',' << (covered ? 1 : 0) << ','
            << format_double(res.effect_min) << ',' << format_double(res.effect_max) << ",\n";
      } else {
        std::string msg = res.error;
        for (char& ch : msg) {
          if (ch == ',' || ch == '\n') ch = ';';
        }
        out << "NA,NA,NA,NA," << truth << ",NA,NA,NA," << msg << '\n';
      }
    }
  }
}

}  // namespace bartspl

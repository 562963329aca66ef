#include "bartspl/propensity.hpp"

#include "bartspl/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace bartspl {

namespace {

double clip_ps(double p) { return std::clamp(p, kPsClip, 1.0 - kPsClip); }

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

const char* to_string(PsModelKind k) {
  switch (k) {
    case PsModelKind::logistic: return "logistic";
    case PsModelKind::bart_probit: return "bart_probit";
    case PsModelKind::provided: return "provided";
    case PsModelKind::true_bayes_rule: return "true_bayes_rule";
    case PsModelKind::covariate_column: return "covariate_column";
  }
  return "?";
}

PsModelKind parse_ps_model(const std::string& s) {
  if (s == "logistic") return PsModelKind::logistic;
  if (s == "bart_probit" || s == "bart-probit") return PsModelKind::bart_probit;
  if (s == "provided") return PsModelKind::provided;
  if (s == "true_bayes_rule") return PsModelKind::true_bayes_rule;
  if (s == "covariate_column") return PsModelKind::covariate_column;
  throw ValidationError("unknown propensity model '" + s + "' (expected logistic, bart_probit or provided)");
}

LogisticFit fit_logistic(const Eigen::MatrixXd& X, std::span<const std::uint8_t> e, const LogisticOptions& options) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols() + 1;
  if (static_cast<std::size_t>(n) != e.size()) throw ValidationError("exposure length does not match design rows");
  Eigen::MatrixXd A(n, k);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = e[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k, options.ridge);
  penalty[0] = 0.0;

  auto deviance_of = [&](const Eigen::VectorXd& eta) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // -2 log-likelihood, computed stably: log(1 + exp(eta)) - y eta
      const double softplus = eta[i] > 0 ? eta[i] + std::log1p(std::exp(-eta[i])) : std::log1p(std::exp(eta[i]));
      dev += 2.0 * (softplus - y[i] * eta[i]);
    }
    return dev;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  const double rate = y.mean();
  beta[0] = std::log(rate / (1.0 - rate));
  Eigen::VectorXd eta = A * beta;
  double dev = deviance_of(eta);
  Eigen::MatrixXd H(k, k);
  for (int it = 1; it <= options.max_iterations; ++it) {
    Eigen::VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-300);
    }
    H = A.transpose() * w.asDiagonal() * A;
    H.diagonal() += penalty;
    const Eigen::VectorXd grad = A.transpose() * (y - p) - penalty.cwiseProduct(beta);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw ConvergenceError("logistic regression: singular information matrix (complete separation likely)");
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    // Step halving keeps the penalized deviance nonincreasing.
    double scale = 1.0;
    Eigen::VectorXd next_beta, next_eta;
    double next_dev = 0.0;
    const double pen_old = beta.cwiseProduct(penalty).dot(beta);
    for (int half = 0; half < 30; ++half) {
      next_beta = beta + scale * step;
      next_eta = A * next_beta;
      next_dev = deviance_of(next_eta);
      if (next_dev + next_beta.cwiseProduct(penalty).dot(next_beta) <= dev + pen_old + 1e-12 * (1 + dev)) break;
      scale *= 0.5;
    }
    if (!next_beta.allFinite()) throw ConvergenceError("logistic regression: non-finite coefficients");
    const double change = std::abs(next_dev - dev) / (std::abs(next_dev) + 0.1);
    beta = next_beta;
    eta = next_eta;
    dev = next_dev;
    if (change < options.tolerance) {
      if (dev < 1e-6) {
        throw ConvergenceError("logistic regression: zero deviance (complete separation)");
      }
      LogisticFit fit;
      fit.coef = beta;
      fit.deviance = dev;
      fit.iterations = it;
      fit.probs.resize(static_cast<std::size_t>(n));
      Eigen::VectorXd w(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double pi = 1.0 / (1.0 + std::exp(-eta[i]));
        fit.probs[static_cast<std::size_t>(i)] = pi;
        w[i] = pi * (1.0 - pi);
      }
      H = A.transpose() * w.asDiagonal() * A;
      H.diagonal() += penalty;
      fit.se = H.inverse().diagonal().cwiseSqrt();
      return fit;
    }
  }
  throw ConvergenceError("logistic regression did not converge in " + std::to_string(options.max_iterations) +
                         " iterations (complete separation likely)");
}

std::vector<double> fit_logistic_ps(const ObservationalDataset& data, const LogisticOptions& options) {
  auto fit = fit_logistic(data.covariates(), data.exposure(), options);
  for (double& p : fit.probs) p = clip_ps(p);
  return fit.probs;
}

std::vector<double> fit_bart_probit_ps(const ObservationalDataset& data, const BartHyperParams& hyper, Rng& rng) {
  std::vector<double> e(data.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = data.exposure()[i];
  BartModel model(data.covariates(), e, hyper, ResponseKind::probit);
  for (int it = 0; it < hyper.burn_in; ++it) model.sweep(rng);
  std::vector<double> mean(data.size(), 0.0);
  for (int it = 0; it < hyper.draws; ++it) {
    model.sweep(rng);
    const auto f = model.fitted();
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += normal_cdf(f[i]);
  }
  for (double& m : mean) m = clip_ps(m / hyper.draws);
  return mean;
}

double CovariateLaw::log_density(double x) const {
  if (kind == Kind::bernoulli) {
    if (x == 1.0) return std::log(p);
    if (x == 0.0) return std::log1p(-p);
    return -std::numeric_limits<double>::infinity();
  }
  const double z = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + z * z / variance);
}

double CovariateLaw::sample(Rng& rng) const {
  if (kind == Kind::bernoulli) return rng.bernoulli(p) ? 1.0 : 0.0;
  return rng.normal(mean, std::sqrt(variance));
}

void MixtureDensitySpec::validate() const {
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw ValidationError("prevalence must lie in (0,1)");
  if (exposed.size() != unexposed.size()) throw ValidationError("group laws have different dimensions");
  for (const auto* group : {&exposed, &unexposed}) {
    for (const auto& law : *group) {
      if (law.kind == CovariateLaw::Kind::gaussian && !(law.variance > 0.0)) {
        throw ValidationError("gaussian variance must be positive");
      }
      if (law.kind == CovariateLaw::Kind::bernoulli && !(law.p >= 0.0 && law.p <= 1.0)) {
        throw ValidationError("bernoulli probability must lie in [0,1]");
      }
    }
  }
}

double true_ps_bayes_rule(const MixtureDensitySpec& spec, std::span<const double> x) {
  spec.validate();
  if (x.size() != spec.exposed.size()) throw ValidationError("covariate vector has the wrong length");
  double l1 = std::log(spec.prevalence);
  double l0 = std::log1p(-spec.prevalence);
  for (std::size_t j = 0; j < x.size(); ++j) {
    l1 += spec.exposed[j].log_density(x[j]);
    l0 += spec.unexposed[j].log_density(x[j]);
  }
  if (std::isinf(l1) && std::isinf(l0)) throw ValidationError("zero density under both groups");
  return clip_ps(std::exp(l1 - log_sum_exp(l1, l0)));
}

PropensityResult estimate_propensity(const ObservationalDataset& data, const PropensityModelSpec& spec, Rng& rng) {
  PropensityResult out;
  switch (spec.kind) {
    case PsModelKind::logistic:
      try {
        out.score = fit_logistic_ps(data, spec.logistic);
      } catch (const ConvergenceError& err) {
        if (spec.ridge_fallback <= 0.0) throw;
        auto opts = spec.logistic;
        opts.ridge = spec.ridge_fallback;
        out.score = fit_logistic_ps(data, opts);
        out.notes.push_back(std::string("logistic fit failed (") + err.what() + "); used ridge penalty " +
                            std::to_string(spec.ridge_fallback));
      }
      break;
    case PsModelKind::bart_probit:
      out.score = fit_bart_probit_ps(data, spec.probit, rng);
      break;
    case PsModelKind::provided:
      if (!data.provided_ps()) throw ValidationError("propensity model 'provided' requires a 'ps' column");
      out.score = *data.provided_ps();
      break;
    case PsModelKind::true_bayes_rule: {
      if (spec.mixture == nullptr) throw ValidationError("true_bayes_rule requires the generating mixture");
      const auto& X = data.covariates();
      out.score.resize(data.size());
      std::vector<double> row(static_cast<std::size_t>(X.cols()));
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
        out.score[static_cast<std::size_t>(i)] = true_ps_bayes_rule(*spec.mixture, row);
      }
      break;
    }
    case PsModelKind::covariate_column: {
      if (spec.column >= data.covariate_count()) throw ValidationError("score column index out of range");
      const auto col = data.covariates().col(static_cast<Eigen::Index>(spec.column));
      out.score.assign(col.data(), col.data() + col.size());
      out.is_probability = false;
      break;
    }
  }
  return out;
}

}  // namespace bartspl

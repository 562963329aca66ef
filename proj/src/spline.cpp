#include "bartspl/spline.hpp"

#include "bartspl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace bartspl {

namespace {

double type7(const std::vector<double>& sorted, double prob) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double cube_pos(double x) { return x > 0.0 ? x * x * x : 0.0; }

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

}  // namespace

std::vector<double> default_knot_probabilities(int K) {
  switch (K) {
    case 3: return {0.10, 0.50, 0.90};
    case 4: return {0.05, 0.35, 0.65, 0.95};
    case 5: return {0.05, 0.275, 0.50, 0.725, 0.95};
    case 6: return {0.05, 0.23, 0.41, 0.59, 0.77, 0.95};
    case 7: return {0.025, 0.1833, 0.3417, 0.50, 0.6583, 0.8167, 0.975};
    default: throw ValidationError("knot count must lie in [3, 7]");
  }
}

std::vector<double> rcs_knots(std::span<const double> values, int K, std::vector<std::string>* warnings) {
  if (values.empty()) return {};
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  for (int k = K; k >= 3; --k) {
    std::vector<double> knots;
    for (double p : default_knot_probabilities(k)) knots.push_back(type7(sorted, p));
    if (std::adjacent_find(knots.begin(), knots.end(), std::greater_equal<>()) == knots.end()) {
      if (k != K && warnings) {
        warnings->push_back("too few distinct values for " + std::to_string(K) + " knots; using " + std::to_string(k));
      }
      return knots;
    }
  }
  if (warnings) warnings->push_back("too few distinct values for a spline; using a linear term");
  return {};
}

Eigen::MatrixXd rcs_basis(std::span<const double> z, std::span<const double> knots) {
  const auto n = static_cast<Eigen::Index>(z.size());
  const auto K = knots.size();
  if (K != 0 && K < 3) throw ValidationError("a restricted cubic spline needs at least 3 knots");
  for (std::size_t j = 1; j < K; ++j) {
    if (!(knots[j] > knots[j - 1])) throw ValidationError("knots must be strictly increasing");
  }
  const Eigen::Index cols = K == 0 ? 1 : static_cast<Eigen::Index>(K - 1);
  Eigen::MatrixXd out(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) out(i, 0) = z[static_cast<std::size_t>(i)];
  if (K == 0) return out;
  const double tk = knots[K - 1];
  const double tk1 = knots[K - 2];
  const double norm = (tk - knots[0]) * (tk - knots[0]);
  for (std::size_t j = 0; j + 2 < K; ++j) {
    const double tj = knots[j];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = z[static_cast<std::size_t>(i)];
      const double v = cube_pos(x - tj) - cube_pos(x - tk1) * (tk - tj) / (tk - tk1) +
                       cube_pos(x - tk) * (tk1 - tj) / (tk - tk1);
      out(i, static_cast<Eigen::Index>(j) + 1) = v / norm;
    }
  }
  return out;
}

void SmoothingConfig::validate() const {
  if (knots < 3 || knots > 7) throw ValidationError("knot count must lie in [3, 7]");
  if (!(trim_fraction >= 0.0 && trim_fraction <= 0.1)) throw ValidationError("trim fraction must lie in [0, 0.1]");
  if (!(tau_multiplier >= 0.0)) throw ValidationError("tau multiplier must be non-negative");
}

std::vector<bool> trim_mask(std::span<const double> score, double fraction) {
  const std::size_t n = score.size();
  std::vector<bool> keep(n, true);
  const auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  if (cut == 0) return keep;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  for (std::size_t k = 0; k < std::min(cut, n); ++k) {
    keep[order[k]] = false;
    keep[order[n - 1 - k]] = false;
  }
  return keep;
}

ConjugatePosterior::ConjugatePosterior(const Eigen::MatrixXd& W, const Eigen::VectorXd& y)
    : n_(static_cast<std::size_t>(W.rows())), width_(static_cast<std::size_t>(W.cols())) {
  if (W.rows() != y.size()) throw ValidationError("response length does not match design rows");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> piv(W);
  piv.setThreshold(1e-10);
  const auto rank = piv.rank();
  for (Eigen::Index c = 0; c < rank; ++c) kept_.push_back(piv.colsPermutation().indices()[c]);
  std::sort(kept_.begin(), kept_.end());
  const auto k = kept_.size();
  if (n_ < k + 2) {
    throw EstimationError("smoothing model has " + std::to_string(n_) + " rows for " + std::to_string(k) +
                          " columns; need at least columns + 2");
  }
  Eigen::MatrixXd Wk(W.rows(), static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) Wk.col(static_cast<Eigen::Index>(c)) = W.col(kept_[c]);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Wk);
  r_ = qr.matrixQR().topRows(static_cast<Eigen::Index>(k)).triangularView<Eigen::Upper>();
  beta_hat_kept_ = qr.solve(y);
  rss_ = (y - Wk * beta_hat_kept_).squaredNorm();
  beta_hat_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width_));
  for (std::size_t c = 0; c < k; ++c) beta_hat_[kept_[c]] = beta_hat_kept_[static_cast<Eigen::Index>(c)];
}

ConjugatePosterior::Draw ConjugatePosterior::draw(Rng& rng) const {
  const auto k = kept_.size();
  Draw d;
  const double shape = 0.5 * static_cast<double>(n_ - k);
  d.sigma2 = std::max(rng.inverse_gamma(shape, 0.5 * rss_), 1e-300);
  Eigen::VectorXd z(static_cast<Eigen::Index>(k));
  for (Eigen::Index c = 0; c < z.size(); ++c) z[c] = rng.normal();
  const Eigen::VectorXd noise = r_.triangularView<Eigen::Upper>().solve(z);
  const Eigen::VectorXd bk = beta_hat_kept_ + std::sqrt(d.sigma2) * noise;
  d.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width_));
  for (std::size_t c = 0; c < k; ++c) d.beta[kept_[c]] = bk[static_cast<Eigen::Index>(c)];
  return d;
}

ConjugatePosterior::Draw fit_smoothing_draw(const Eigen::MatrixXd& W, const Eigen::VectorXd& y, Rng& rng) {
  return ConjugatePosterior(W, y).draw(rng);
}

Eigen::VectorXd predict_rn_draw(const ConjugatePosterior::Draw& fit, const Eigen::MatrixXd& W_rn,
                                std::span<const double> d, double t_o, OutcomeType type, Rng& rng,
                                double tau_multiplier) {
  if (static_cast<std::size_t>(W_rn.rows()) != d.size()) throw ValidationError("distance length does not match RN rows");
  const Eigen::VectorXd mean = W_rn * fit.beta;
  Eigen::VectorXd out(mean.size());
  for (Eigen::Index r = 0; r < mean.size(); ++r) {
    if (type == OutcomeType::continuous) {
      const double var = fit.sigma2 + tau_inflation(d[static_cast<std::size_t>(r)], t_o, tau_multiplier);
      out[r] = mean[r] + std::sqrt(var) * rng.normal();
    } else {
      out[r] = arcsine_inverse(mean[r] + std::sqrt(fit.sigma2) * rng.normal());
    }
  }
  return out;
}

double arcsine_forward(double x) {
  constexpr double slack = 1e-12;
  if (!(x >= -1.0 - slack && x <= 1.0 + slack)) {
    throw ValidationError("arcsine transform input " + std::to_string(x) + " outside [-1, 1]");
  }
  return std::asin(std::clamp(x, -1.0, 1.0));
}

double arcsine_inverse(double v) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  return std::sin(std::clamp(v, -half_pi, half_pi));
}

std::vector<double> arcsine_map(std::span<const double> values, ArcsineDirection direction) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = direction == ArcsineDirection::forward ? arcsine_forward(values[i]) : arcsine_inverse(values[i]);
  }
  return out;
}

SplineArm::SplineArm(Inputs inputs, OutcomeType type, const SmoothingConfig& config,
                     std::vector<std::string>* warnings)
    : inputs_(std::move(inputs)), type_(type), config_(config) {
  config_.validate();
  const auto q = inputs_.ro_score.size();
  const auto r = inputs_.rn_score.size();
  if (inputs_.fit_mask.size() != q || static_cast<std::size_t>(inputs_.ro_covariates.rows()) != q) {
    throw ValidationError("RO inputs have inconsistent lengths");
  }
  if (inputs_.rn_ystar.size() != r || inputs_.rn_distance.size() != r ||
      static_cast<std::size_t>(inputs_.rn_covariates.rows()) != r) {
    throw ValidationError("RN inputs have inconsistent lengths");
  }
  for (std::size_t i = 0; i < q; ++i) {
    if (inputs_.fit_mask[i]) fit_index_.push_back(i);
  }
  std::vector<double> fit_scores;
  for (auto i : fit_index_) fit_scores.push_back(inputs_.ro_score[i]);
  score_knots_ = rcs_knots(fit_scores, config_.knots, warnings);
  score_fit_ = rcs_basis(fit_scores, score_knots_);
  score_rn_ = rcs_basis(inputs_.rn_score, score_knots_);
  // Covariate rows of the fit set are fixed; keep them in place of the full RO block.
  inputs_.ro_covariates = take_rows(inputs_.ro_covariates, fit_index_);
}

void SplineArm::assemble(std::span<const double> ro_ystar) {
  std::vector<double> y_fit;
  y_fit.reserve(fit_index_.size());
  for (auto i : fit_index_) y_fit.push_back(ro_ystar[i]);
  Eigen::MatrixXd ys_fit, ys_rn;
  if (type_ == OutcomeType::continuous) {
    const auto knots = rcs_knots(y_fit, config_.knots);
    ys_fit = rcs_basis(y_fit, knots);
    ys_rn = rcs_basis(inputs_.rn_ystar, knots);
  } else {
    ys_fit = rcs_basis(y_fit, {});
    ys_rn = rcs_basis(inputs_.rn_ystar, {});
  }
  const auto& X = inputs_.ro_covariates;
  const auto& Xr = inputs_.rn_covariates;
  const Eigen::Index width = 1 + score_fit_.cols() + ys_fit.cols() + X.cols();
  w_fit_.resize(static_cast<Eigen::Index>(fit_index_.size()), width);
  w_fit_ << Eigen::VectorXd::Ones(w_fit_.rows()), score_fit_, ys_fit, X;
  w_rn_.resize(static_cast<Eigen::Index>(inputs_.rn_score.size()), width);
  if (w_rn_.rows() > 0) w_rn_ << Eigen::VectorXd::Ones(w_rn_.rows()), score_rn_, ys_rn, Xr;
}

Eigen::VectorXd SplineArm::draw(std::span<const double> ro_ystar, std::span<const double> ro_delta, double t_o,
                                Rng& rng) {
  if (ro_ystar.size() != inputs_.ro_score.size() || ro_delta.size() != inputs_.ro_score.size()) {
    throw ValidationError("RO draw has the wrong length");
  }
  assemble(ro_ystar);
  Eigen::VectorXd y(static_cast<Eigen::Index>(fit_index_.size()));
  for (std::size_t k = 0; k < fit_index_.size(); ++k) {
    const double v = ro_delta[fit_index_[k]];
    y[static_cast<Eigen::Index>(k)] = type_ == OutcomeType::binary ? arcsine_forward(v) : v;
  }
  const ConjugatePosterior post(w_fit_, y);
  last_dropped_ = post.dropped_count();
  const auto fit = post.draw(rng);
  return predict_rn_draw(fit, w_rn_, inputs_.rn_distance, t_o, type_, rng, config_.tau_multiplier);
}

}  // namespace bartspl

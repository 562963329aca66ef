#pragma once

#include "bartspl/core_data.hpp"
#include "bartspl/random.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace bartspl {

/// Default knot quantiles for K knots (3 <= K <= 7).
std::vector<double> default_knot_probabilities(int K);

/// Knots at the default quantiles of `values`. K is reduced (with a warning)
/// while knots are not strictly increasing; fewer than 3 distinct knots
/// yields an empty vector (linear term only).
std::vector<double> rcs_knots(std::span<const double> values, int K, std::vector<std::string>* warnings = nullptr);

/// Restricted cubic spline columns [z, c_1(z), ..., c_{K-2}(z)], with
/// c_j(z) = [(z - t_j)+^3 - (z - t_{K-1})+^3 (t_K - t_j)/(t_K - t_{K-1})
///           + (z - t_K)+^3 (t_{K-1} - t_j)/(t_K - t_{K-1})] / (t_K - t_1)^2.
/// Empty knots give the single linear column.
Eigen::MatrixXd rcs_basis(std::span<const double> z, std::span<const double> knots);

struct SmoothingConfig {
  int knots = 5;
  double trim_fraction = 0.02;
  double tau_multiplier = 10.0;

  void validate() const;
};

/// true for rows used in the fit: drops floor(fraction * n) rows at each end
/// of the score ordering (ties broken by position).
std::vector<bool> trim_mask(std::span<const double> score, double fraction);

/// Posterior of a linear model under the flat Normal-Inverse-Gamma prior
/// (beta flat, sigma^2 proportional to 1/sigma^2). Collinear columns are
/// dropped before factorizing.
class ConjugatePosterior {
 public:
  ConjugatePosterior(const Eigen::MatrixXd& W, const Eigen::VectorXd& y);

  struct Draw {
    Eigen::VectorXd beta;  // full width; dropped columns hold 0
    double sigma2 = 0.0;
  };
  /// sigma^2 ~ InvGamma((n - k)/2, RSS/2), beta ~ N(beta_hat, sigma^2 (W'W)^-1).
  Draw draw(Rng& rng) const;

  const Eigen::VectorXd& beta_hat() const { return beta_hat_; }  // full width
  double rss() const { return rss_; }
  std::size_t rows() const { return n_; }
  std::size_t rank() const { return kept_.size(); }
  const std::vector<Eigen::Index>& kept_columns() const { return kept_; }
  std::size_t dropped_count() const { return width_ - kept_.size(); }

 private:
  std::size_t n_ = 0;
  std::size_t width_ = 0;
  std::vector<Eigen::Index> kept_;
  Eigen::MatrixXd r_;  // upper-triangular factor of the kept columns
  Eigen::VectorXd beta_hat_;
  Eigen::VectorXd beta_hat_kept_;
  double rss_ = 0.0;
};

/// One conjugate draw (beta, sigma_S^2).
ConjugatePosterior::Draw fit_smoothing_draw(const Eigen::MatrixXd& W, const Eigen::VectorXd& y, Rng& rng);

/// tau = multiplier * d * t_O.
inline double tau_inflation(double d, double t_o, double multiplier = 10.0) { return multiplier * d * t_o; }

/// Posterior predictive draws at RN rows. Continuous: N(w'beta, sigma^2 + tau(d, t_O)).
/// Binary: N(w'beta, sigma^2) on the arcsine scale mapped back by arcsine_inverse.
Eigen::VectorXd predict_rn_draw(const ConjugatePosterior::Draw& fit, const Eigen::MatrixXd& W_rn,
                                std::span<const double> d, double t_o, OutcomeType type, Rng& rng,
                                double tau_multiplier = 10.0);

/// arcsin on [-1, 1]; inputs within 1e-12 outside are clipped, beyond that ValidationError.
double arcsine_forward(double x);
/// sin(clamp(v, -pi/2, pi/2)).
double arcsine_inverse(double v);
enum class ArcsineDirection { forward, inverse };
std::vector<double> arcsine_map(std::span<const double> values, ArcsineDirection direction);

/// Smoothing model for one Y* arm: fixed parts of the design (score basis,
/// covariates, RN observed outcomes) are built once; the Y* basis and the
/// response change every iteration.
///
/// Design columns: [1, rcs(score), rcs(Y*) (continuous) or Y* (binary), X].
class SplineArm {
 public:
  struct Inputs {
    std::vector<double> ro_score;
    Eigen::MatrixXd ro_covariates;
    std::vector<bool> fit_mask;      // over RO rows
    std::vector<double> rn_score;
    Eigen::MatrixXd rn_covariates;
    std::vector<double> rn_ystar;    // observed outcome of each RN row
    std::vector<double> rn_distance;
  };

  SplineArm(Inputs inputs, OutcomeType type, const SmoothingConfig& config,
            std::vector<std::string>* warnings = nullptr);

  /// Fits on the masked RO rows and draws the RN effects.
  /// `ro_delta` is on the effect scale (the arcsine transform is applied here
  /// for binary outcomes); the result is on the effect scale too.
  Eigen::VectorXd draw(std::span<const double> ro_ystar, std::span<const double> ro_delta, double t_o, Rng& rng);

  /// Full design rows for the current Y* (after the latest draw).
  const Eigen::MatrixXd& fit_design() const { return w_fit_; }
  const Eigen::MatrixXd& rn_design() const { return w_rn_; }
  std::size_t fit_rows() const { return fit_index_.size(); }
  std::size_t rn_rows() const { return inputs_.rn_score.size(); }
  std::size_t last_dropped_columns() const { return last_dropped_; }
  const std::vector<double>& score_knots() const { return score_knots_; }

 private:
  void assemble(std::span<const double> ro_ystar);

  Inputs inputs_;
  OutcomeType type_;
  SmoothingConfig config_;
  std::vector<std::size_t> fit_index_;
  std::vector<double> score_knots_;
  Eigen::MatrixXd score_fit_, score_rn_;  // rcs(score) columns
  Eigen::MatrixXd w_fit_, w_rn_;
  std::size_t last_dropped_ = 0;
};

}  // namespace bartspl

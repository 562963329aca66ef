#include "bartspl/error.hpp"
#include "bartspl/spline.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace bartspl;
using bartspl::testing::Gen;

TEST(Rcs, DefaultKnotQuantiles) {
  const auto p = default_knot_probabilities(5);
  const std::vector<double> expect{0.05, 0.275, 0.5, 0.725, 0.95};
  ASSERT_EQ(p.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[i], expect[i], 1e-12);
}

TEST(Rcs, TermMatchesTruncatedPowerFormula) {
  const std::vector<double> knots{0, 1, 2, 3, 4};
  const std::vector<double> z{2.5};
  const auto B = rcs_basis(z, knots);
  ASSERT_EQ(B.cols(), 4);
  EXPECT_DOUBLE_EQ(B(0, 0), 2.5);
  // c_1(2.5) = (2.5^3 - 0 + 0) / 16
  EXPECT_NEAR(B(0, 1), 15.625 / 16.0, 1e-15);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(B(0, static_cast<Eigen::Index>(j + 1)), bartspl::testing::rcs_term(2.5, knots, j), 1e-14);
}

TEST(RcsProperty, BasisMatchesFormulaOnRandomKnots) {
  for (std::uint64_t c = 0; c < 200; ++c) {
    Gen g(derive_seed(61, c));
    const int K = g.integer(3, 7);
    auto knots = g.uniforms(static_cast<std::size_t>(K), -3.0, 3.0);
    std::sort(knots.begin(), knots.end());
    const auto z = g.uniforms(20, -5.0, 5.0);
    const auto B = rcs_basis(z, knots);
    ASSERT_EQ(B.cols(), K - 1);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      ASSERT_EQ(B(r, 0), z[i]);
      for (int j = 0; j + 2 < K; ++j)
        ASSERT_NEAR(B(r, j + 1), bartspl::testing::rcs_term(z[i], knots, static_cast<std::size_t>(j)), 1e-10);
    }
  }
}

TEST(Rcs, BelowFirstKnotIsLinearOnly) {
  const std::vector<double> knots{1, 2, 3, 4};
  const std::vector<double> z{-1.0, 0.0, 0.5, 1.0};
  const auto B = rcs_basis(z, knots);
  for (Eigen::Index i = 0; i < B.rows(); ++i)
    for (Eigen::Index j = 1; j < B.cols(); ++j) EXPECT_EQ(B(i, j), 0.0);
}

TEST(Rcs, LinearBeyondLastKnot) {
  const std::vector<double> knots{0, 1, 2, 3, 4};
  const std::vector<double> z{5.0, 6.0, 7.0};
  const auto B = rcs_basis(z, knots);
  for (Eigen::Index j = 1; j < B.cols(); ++j) {
    EXPECT_NEAR(B(2, j) - B(1, j), B(1, j) - B(0, j), 1e-12);
  }
}

TEST(Rcs, LinearTargetIsReproduced) {
  std::vector<double> z;
  for (int i = 0; i < 100; ++i) z.push_back(0.1 * i);
  const auto knots = rcs_knots(z, 5);
  const auto B = rcs_basis(z, knots);
  Eigen::MatrixXd W(100, B.cols() + 1);
  W << Eigen::VectorXd::Ones(100), B;
  const Eigen::VectorXd y = 2.0 * Eigen::Map<const Eigen::VectorXd>(z.data(), 100);
  const ConjugatePosterior post(W, y);
  EXPECT_NEAR(post.beta_hat()(0), 0.0, 1e-9);
  EXPECT_NEAR(post.beta_hat()(1), 2.0, 1e-9);
  for (Eigen::Index j = 2; j < W.cols(); ++j) EXPECT_NEAR(post.beta_hat()(j), 0.0, 1e-8);
}

TEST(Rcs, FewDistinctValuesReduceKnots) {
  std::vector<double> z(100, 1.0);
  z[0] = 0.0;
  std::vector<std::string> w;
  const auto knots = rcs_knots(z, 5, &w);
  EXPECT_TRUE(knots.empty());
  EXPECT_FALSE(w.empty());
  EXPECT_EQ(rcs_basis(z, knots).cols(), 1);
}

TEST(Trim, DropsFloorFractionAtEachEnd) {
  Gen g(1);
  const auto score = g.uniforms(500, 0.0, 1.0);
  const auto mask = trim_mask(score, 0.02);
  std::vector<std::size_t> order(500);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
  std::size_t kept = 0;
  for (bool m : mask) kept += m;
  EXPECT_EQ(kept, 480u);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_FALSE(mask[order[k]]);
    EXPECT_FALSE(mask[order[499 - k]]);
  }
  EXPECT_TRUE(mask[order[10]]);
  EXPECT_TRUE(mask[order[489]]);
}

TEST(Conjugate, PosteriorMomentsMatchClosedForm) {
  Gen g(2);
  const Eigen::Index n = 60, k = 4;
  const Eigen::MatrixXd W = g.matrix(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = W.row(i).sum() + 0.7 * g.rng.normal();
  const Eigen::VectorXd ls = bartspl::testing::least_squares(W, y);
  const double rss = (y - W * ls).squaredNorm();
  const ConjugatePosterior post(W, y);
  Rng rng(3);
  const int draws = 10000;
  std::vector<std::vector<double>> beta(static_cast<std::size_t>(k));
  std::vector<double> s2;
  for (int d = 0; d < draws; ++d) {
    const auto dr = post.draw(rng);
    for (Eigen::Index j = 0; j < k; ++j) beta[static_cast<std::size_t>(j)].push_back(dr.beta(j));
    s2.push_back(dr.sigma2);
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto& b = beta[static_cast<std::size_t>(j)];
    const double se = std::sqrt(bartspl::testing::variance_of(b) / draws);
    EXPECT_NEAR(bartspl::testing::mean_of(b), ls(j), 3.0 * se) << j;
  }
  const double oracle = rss / static_cast<double>(n - k - 2);
  EXPECT_NEAR(bartspl::testing::mean_of(s2), oracle, 0.02 * oracle);
  EXPECT_NEAR(post.rss(), rss, 1e-9 * rss);
}

TEST(Conjugate, NoiselessFitConcentrates) {
  Gen g(4);
  const Eigen::MatrixXd W = g.matrix(30, 3);
  const Eigen::Vector3d beta(1.0, -2.0, 0.5);
  const ConjugatePosterior post(W, W * beta);
  Rng rng(5);
  for (int d = 0; d < 100; ++d) {
    const auto dr = post.draw(rng);
    EXPECT_LT(dr.sigma2, 1e-20);
    EXPECT_LT((dr.beta - beta).norm(), 1e-8);
  }
}

TEST(Conjugate, CollinearColumnIsDropped) {
  Gen g(6);
  Eigen::MatrixXd W(40, 3);
  W.leftCols(2) = g.matrix(40, 2);
  W.col(2) = 2.0 * W.col(0) - W.col(1);
  const Eigen::VectorXd y = W.col(0) + Eigen::VectorXd::Constant(40, 0.1);
  const ConjugatePosterior post(W, y);
  EXPECT_EQ(post.rank(), 2u);
  EXPECT_EQ(post.dropped_count(), 1u);
  Rng rng(7);
  const auto dr = post.draw(rng);
  EXPECT_TRUE(dr.beta.allFinite());
  EXPECT_EQ(dr.beta.size(), 3);
}

TEST(Conjugate, TooFewRowsIsAnError) {
  Gen g(8);
  EXPECT_THROW(ConjugatePosterior(g.matrix(5, 4), Eigen::VectorXd::Ones(5)), EstimationError);
}

TEST(Tau, FormulaArithmetic) {
  EXPECT_DOUBLE_EQ(tau_inflation(0.1, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(tau_inflation(0.0, 2.0), 0.0);
}

TEST(Tau, PredictiveVarianceDecomposes) {
  Gen g(9);
  const Eigen::MatrixXd W = g.matrix(50, 3);
  Eigen::VectorXd y(50);
  for (Eigen::Index i = 0; i < 50; ++i) y(i) = W(i, 0) + g.rng.normal();
  const ConjugatePosterior post(W, y);
  const Eigen::MatrixXd w = g.matrix(1, 3);
  const std::vector<double> d{0.05};
  Rng rng(10);
  std::vector<double> out, mean_term;
  double s2 = 0.0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const auto fit = post.draw(rng);
    mean_term.push_back((w * fit.beta)(0));
    s2 += fit.sigma2 / draws;
    out.push_back(predict_rn_draw(fit, w, d, 4.0, OutcomeType::continuous, rng)(0));
  }
  const double oracle = s2 + 2.0 + bartspl::testing::variance_of(mean_term);
  EXPECT_NEAR(bartspl::testing::variance_of(out), oracle, 0.05 * oracle);
}

TEST(Arcsine, Examples) {
  EXPECT_EQ(arcsine_forward(0.0), 0.0);
  EXPECT_EQ(arcsine_inverse(0.0), 0.0);
  EXPECT_EQ(arcsine_inverse(2.0), 1.0);
  EXPECT_EQ(arcsine_inverse(-2.0), -1.0);
  EXPECT_DOUBLE_EQ(arcsine_forward(1.0 + 1e-13), std::numbers::pi / 2);
  EXPECT_THROW(arcsine_forward(1.001), ValidationError);
}

TEST(ArcsineProperty, InversePair) {
  std::vector<double> grid;
  for (int i = 0; i <= 2000; ++i) grid.push_back(-1.0 + i / 1000.0);
  const auto back = arcsine_map(arcsine_map(grid, ArcsineDirection::forward), ArcsineDirection::inverse);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(back[i], grid[i], 1e-12);
}

TEST(Arcsine, BinaryDrawsStayInRange) {
  Gen g(11);
  const Eigen::MatrixXd W = g.matrix(50, 2);
  Eigen::VectorXd y(50);
  for (Eigen::Index i = 0; i < 50; ++i) y(i) = std::asin(std::clamp(0.9 * W(i, 0), -1.0, 1.0));
  const ConjugatePosterior post(W, y);
  Rng rng(12);
  const Eigen::MatrixXd rows = 5.0 * g.matrix(30, 2);
  const std::vector<double> d(30, 0.3);
  for (int k = 0; k < 200; ++k) {
    const auto v = predict_rn_draw(post.draw(rng), rows, d, 1.0, OutcomeType::binary, rng);
    for (double x : v) {
      ASSERT_GE(x, -1.0);
      ASSERT_LE(x, 1.0);
    }
  }
}

TEST(SplineArm, ExactLinearEffectIsExtrapolated) {
  Gen g(13);
  SplineArm::Inputs in;
  in.ro_score = g.uniforms(200, 0.1, 0.7);
  in.ro_covariates = g.matrix(200, 2);
  in.fit_mask = trim_mask(in.ro_score, 0.02);
  in.rn_score = g.uniforms(10, 0.7, 0.8);
  in.rn_covariates = g.matrix(10, 2);
  in.rn_ystar = g.normals(10);
  in.rn_distance.assign(10, 1e-14);
  SmoothingConfig cfg;
  SplineArm arm(in, OutcomeType::continuous, cfg);
  EXPECT_EQ(arm.fit_rows(), 192u);
  const auto ystar = g.normals(200);
  std::vector<double> delta;
  for (double s : in.ro_score) delta.push_back(1.0 + 2.0 * s);
  Rng rng(14);
  const auto out = arm.draw(ystar, delta, 1.0, rng);
  ASSERT_EQ(out.size(), 10);
  for (Eigen::Index r = 0; r < 10; ++r) EXPECT_NEAR(out(r), 1.0 + 2.0 * in.rn_score[static_cast<std::size_t>(r)], 1e-6);
  // 1 + (K - 1) score columns + (K - 1) outcome columns + 2 covariates
  EXPECT_EQ(arm.fit_design().cols(), 1 + 4 + 4 + 2);
  EXPECT_EQ(arm.rn_design().rows(), 10);
}

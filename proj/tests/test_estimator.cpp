#include "bartspl/error.hpp"
#include "bartspl/estimator.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bartspl;
using bartspl::testing::Gen;

namespace {

struct Toy {
  ObservationalDataset data;
  std::vector<double> ps;
};

/// One confounder, logistic exposure, y = 0.5 x + delta e + noise.
Toy toy(std::uint64_t seed, std::size_t n, double delta, double noise, double slope = 1.5, bool binary = false) {
  Gen g(seed);
  RawTable t;
  t.names = {"y", "e", "x"};
  t.columns.assign(3, {});
  std::vector<double> ps;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = g.rng.normal();
    const double p = 1.0 / (1.0 + std::exp(-slope * x));
    const bool e = i == 0 ? true : i == 1 ? false : g.rng.bernoulli(p);
    double y = 0.5 * x + delta * e + noise * g.rng.normal();
    if (binary) y = g.rng.bernoulli(1.0 / (1.0 + std::exp(-(x + delta * e)))) ? 1.0 : 0.0;
    t.columns[0].push_back(y);
    t.columns[1].push_back(e);
    t.columns[2].push_back(x);
    ps.push_back(p);
  }
  ValidationOptions o;
  o.outcome_type = binary ? OutcomeType::binary : OutcomeType::continuous;
  return {validate_dataset(t, o), ps};
}

BartSplConfig quick_config(std::uint64_t seed) {
  BartSplConfig c;
  c.bart.trees = 50;
  c.bart.burn_in = 100;
  c.bart.draws = 200;
  c.bootstrap_b = 200;
  c.seed = seed;
  return c;
}

CausalSample sample_of(const Toy& t, const OverlapParams& p) {
  auto part = partition_sample(t.ps, t.data.exposure(), p);
  part = screen_interior_gaps(part, t.ps, p, ScreenMode::both_tails, true).partition;
  return make_causal_sample(t.data, t.ps, ScoreKind::probability, part);
}

OverlapParams wide_overlap() {
  OverlapParams p;
  p.a_absolute = 2.0;
  p.b = 1;
  return p;
}

}  // namespace

TEST(Summaries, SampleAverageExamples) {
  EXPECT_EQ(sample_ace_draw(std::vector<double>{1, 2, 3}, {}), 2.0);
  EXPECT_EQ(sample_ace_draw(std::vector<double>{1, 3}, std::vector<double>{5, 7}), 4.0);
}

TEST(SummariesProperty, SampleAverageMatchesIndependentSum) {
  for (std::uint64_t c = 0; c < 500; ++c) {
    Gen g(derive_seed(71, c));
    const auto a = g.normals(static_cast<std::size_t>(g.integer(1, 300)), 0.0, 10.0);
    const auto b = g.normals(static_cast<std::size_t>(g.integer(0, 300)), 3.0, 1.0);
    long double s = 0.0L, comp = 0.0L;
    for (const auto* v : {&a, &b})
      for (double x : *v) {
        const long double y = x - comp;
        const long double t = s + y;
        comp = (t - s) - y;
        s = t;
      }
    const double oracle = static_cast<double>(s / static_cast<long double>(a.size() + b.size()));
    const double got = sample_ace_draw(a, b);
    ASSERT_LE(std::abs(got - oracle), 1e-15 * std::max(std::abs(oracle), 1e-300) + 1e-300) << c;
  }
}

TEST(Summaries, BootstrapSingleUnitIsExact) {
  Rng rng(1);
  EXPECT_EQ(population_ace_draw(std::vector<double>{3.25}, 1000, rng), 3.25);
}

TEST(SummariesProperty, BootstrapDrawIsConvexCombination) {
  for (std::uint64_t c = 0; c < 300; ++c) {
    Gen g(derive_seed(81, c));
    const auto d = g.normals(static_cast<std::size_t>(g.integer(2, 100)));
    const double v = population_ace_draw(d, 1000, g.rng);
    ASSERT_GE(v, *std::min_element(d.begin(), d.end()));
    ASSERT_LE(v, *std::max_element(d.begin(), d.end()));
  }
}

TEST(Summaries, BootstrapVarianceMatchesDirichletMoment) {
  Gen g(2);
  const auto d = g.normals(25);
  const double dbar = bartspl::testing::mean_of(d);
  double ss = 0.0;
  for (double v : d) ss += (v - dbar) * (v - dbar);
  const double n = 25.0;
  const double oracle = ss / (n * (n + 1.0));
  const auto means = bootstrap_means(d, 100000, g.rng);
  EXPECT_NEAR(bartspl::testing::variance_of(means), oracle, 0.03 * oracle);
  EXPECT_NEAR(bartspl::testing::mean_of(means), dbar, 4.0 * std::sqrt(oracle / 1e5));
  // the single-draw shortcut has the same law
  std::vector<double> single;
  for (int k = 0; k < 100000; ++k) single.push_back(population_ace_draw(d, 1000, g.rng));
  EXPECT_NEAR(bartspl::testing::variance_of(single), oracle, 0.03 * oracle);
}

TEST(Summaries, PercentileIntervalExamples) {
  const std::vector<double> c(50, 1.5);
  const auto s = summarize(c);
  EXPECT_EQ(s.point, 1.5);
  EXPECT_EQ(s.ci_lower, 1.5);
  EXPECT_EQ(s.ci_upper, 1.5);

  std::vector<double> seq;
  for (int i = 1; i <= 100; ++i) seq.push_back(i);
  const auto q = summarize(seq, 0.95);
  EXPECT_NEAR(q.ci_lower, bartspl::testing::quantile_formula(seq, 0.025), 1e-12);
  EXPECT_NEAR(q.ci_upper, bartspl::testing::quantile_formula(seq, 0.975), 1e-12);
  EXPECT_NEAR(q.ci_lower, 3.475, 1e-12);
  EXPECT_NEAR(q.ci_upper, 97.525, 1e-12);
  EXPECT_DOUBLE_EQ(q.point, 50.5);

  Gen g(3);
  const auto z = g.normals(100000);
  const auto n = summarize(z, 0.95);
  EXPECT_NEAR(n.ci_lower, -1.96, 0.03);
  EXPECT_NEAR(n.ci_upper, 1.96, 0.03);
}

TEST(Estimator, ImputationDesignColumns) {
  const auto t = toy(4, 60, 1.0, 0.5);
  const auto s = sample_of(t, wide_overlap());
  const auto D = imputation_design(s);
  ASSERT_EQ(D.cols(), 3);
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    EXPECT_EQ(D(i, 0), t.data.exposure()[static_cast<std::size_t>(i)]);
    EXPECT_EQ(D(i, 1), t.ps[static_cast<std::size_t>(i)]);
    EXPECT_EQ(D(i, 2), t.data.covariates()(i, 0));
  }
  // a covariate used as the score is not repeated
  const std::vector<double> x(t.data.covariates().col(0).data(), t.data.covariates().col(0).data() + 60);
  auto part = partition_sample(x, t.data.exposure(), wide_overlap());
  const auto cs = make_causal_sample(t.data, x, ScoreKind::covariate, part);
  EXPECT_EQ(imputation_design(cs).cols(), 2);
}

TEST(Estimator, EmptyRnMakesMethodsCoincide) {
  const auto t = toy(5, 150, 1.0, 0.3, 0.5);
  const auto s = sample_of(t, wide_overlap());
  ASSERT_EQ(s.partition.rn_count(), 0u);
  const auto cfg = quick_config(6);
  const auto a = run_bart_spl(s, cfg);
  const auto b = run_untrimmed_bart(s, cfg);
  const auto c = run_trimmed_bart(s, cfg);
  EXPECT_EQ(a.draws.delta_rn.cols(), 0);
  EXPECT_EQ(a.draws.delta_p, b.draws.delta_p);
  EXPECT_EQ(a.draws.delta_s, b.draws.delta_s);
  EXPECT_EQ(b.draws.delta_p, c.draws.delta_p);
  EXPECT_EQ(c.sample.estimand, Estimand::trimmed_sample);
  EXPECT_EQ(c.population.estimand, Estimand::trimmed_population);
  EXPECT_EQ(a.population.estimand, Estimand::population);
}

TEST(Estimator, ConstantEffectRecoveredUnderMildNonOverlap) {
  const double delta = 2.0;
  const auto t = toy(7, 600, delta, 0.0, 1.0);
  OverlapParams p;
  p.a_fraction = 0.1;
  p.b = 10;
  const auto s = sample_of(t, p);
  ASSERT_GT(s.partition.rn_count(), 0u);
  ASSERT_LT(s.partition.pi, 0.3);
  auto cfg = quick_config(8);
  cfg.bart.trees = 100;
  cfg.bart.draws = 300;
  const auto r = run_bart_spl(s, cfg);
  EXPECT_NEAR(r.population.point, delta, 0.05 * delta);
  EXPECT_LT(r.draws.max_sample_identity_error(), 1e-12);
  EXPECT_EQ(r.draws.iterations(), 300u);
  EXPECT_EQ(r.individual().size(), t.data.size());
}

TEST(Estimator, RoEffectsTrackTruth) {
  // RO-mean of the imputed effects lands near the true RO mean.
  const double delta = 1.0;
  const auto t = toy(9, 300, delta, 0.5, 1.0);
  OverlapParams p;
  p.a_fraction = 0.1;
  p.b = 10;
  const auto s = sample_of(t, p);
  const auto r = run_bart_spl(s, quick_config(10));
  const Eigen::VectorXd ro_mean = r.draws.delta_ro.rowwise().mean();
  std::vector<double> v(ro_mean.data(), ro_mean.data() + ro_mean.size());
  const double se = bartspl::testing::batch_means_se(v, 20);
  EXPECT_NEAR(bartspl::testing::mean_of(v), delta, std::max(4.0 * se, 0.15));
}

TEST(Estimator, BinaryEffectsStayInUnitRange) {
  const auto t = toy(11, 300, 1.0, 0.0, 1.5, true);
  OverlapParams p;
  p.a_fraction = 0.1;
  p.b = 10;
  const auto s = sample_of(t, p);
  const auto r = run_bart_spl(s, quick_config(12));
  EXPECT_LE(r.draws.delta_ro.cwiseAbs().maxCoeff(), 1.0);
  if (r.draws.delta_rn.size() > 0) EXPECT_LE(r.draws.delta_rn.cwiseAbs().maxCoeff(), 1.0);
  for (double v : r.draws.delta_p) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Estimator, RnArmsRoutedByExposure) {
  const auto t = toy(13, 400, 1.0, 0.3, 2.5);
  OverlapParams p;
  p.a_fraction = 0.1;
  p.b = 10;
  const auto s = sample_of(t, p);
  bool exposed = false, unexposed = false;
  for (auto u : s.rn()) (t.data.exposure()[u] ? exposed : unexposed) = true;
  ASSERT_TRUE(exposed && unexposed);
  const auto r = run_bart_spl(s, quick_config(14));
  EXPECT_TRUE(r.draws.delta_rn.allFinite());
  EXPECT_EQ(r.draws.delta_rn.cols(), static_cast<Eigen::Index>(s.rn().size()));
}

TEST(Estimator, Determinism) {
  const auto t = toy(15, 400, 1.0, 0.5, 1.0);
  OverlapParams p;
  p.a_fraction = 0.1;
  p.b = 10;
  const auto s = sample_of(t, p);
  const auto a = run_bart_spl(s, quick_config(16));
  const auto b = run_bart_spl(s, quick_config(16));
  EXPECT_EQ(a.draws.delta_p, b.draws.delta_p);
  EXPECT_EQ(a.draws.delta_ro, b.draws.delta_ro);
}

TEST(Estimator, TrimmedRefusesTinyRo) {
  const auto t = toy(17, 60, 1.0, 0.5);
  std::vector<Interval> o{{t.ps[0] - 1e-9, t.ps[0] + 1e-9}};
  auto part = assign_regions(t.ps, o);
  const auto s = make_causal_sample(t.data, t.ps, ScoreKind::probability, part);
  EXPECT_THROW(run_trimmed_bart(s, quick_config(1)), EstimationError);
}

TEST(Estimator, MethodNames) {
  for (Method m : {Method::bart_spl, Method::untrimmed_bart, Method::trimmed_bart})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("gr"), ValidationError);
}

#include "batchcov/stats_core.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

using namespace batchcov;

namespace {

ModelSpec identity1() { return ModelSpec::from_polynomial(Polynomial(1, {{{1}, 1.0}}), Vector::Zero(1)); }
ModelSpec quad1() { return ModelSpec::from_polynomial(Polynomial(1, {{{1}, 1.0}, {{2}, 1.0}}), Vector::Zero(1)); }

std::vector<Vector> sample_data(int d, std::size_t n, std::uint64_t seed) {
  auto rng = substream(seed, 0);
  std::normal_distribution<double> nd;
  std::vector<Vector> xs(n, Vector(d));
  for (auto& x : xs)
    for (int i = 0; i < d; ++i) x[i] = nd(rng) + 0.3;
  return xs;
}

}  // namespace

TEST(BatchEstimates, IdentityBatchMeans) {
  const auto est = batch_estimates(as_points({1, 3, 5, 7}), BatchLayout{2, 2, 0}, identity1());
  ASSERT_EQ(est.size(), 2u);
  EXPECT_DOUBLE_EQ(est[0], 2.0);
  EXPECT_DOUBLE_EQ(est[1], 6.0);
}

TEST(BatchEstimates, QuadraticAtBatchMeans) {
  const auto est = batch_estimates(as_points({0.1, 0.1, -0.2, -0.2}), BatchLayout{2, 2, 0}, quad1());
  EXPECT_NEAR(est[0], 0.11, 1e-15);
  EXPECT_NEAR(est[1], -0.16, 1e-15);
}

TEST(BatchEstimates, Errors) {
  EXPECT_THROW(batch_estimates(as_points({1, 2}), BatchLayout{1, 2, 0}, identity1()), std::invalid_argument);
  EXPECT_THROW(batch_estimates(as_points({1, 2, 3}), BatchLayout{2, 2, 0}, identity1()), std::invalid_argument);
}

TEST(ConfidenceInterval, DegenerateWhenAllEqual) {
  const auto data = as_points({4.0, 4.0, 4.0, 4.0, 4.0, 4.0});
  for (Method m : kAllMethods) {
    const auto ci = confidence_interval(data, BatchLayout{3, 2, 0}, identity1(), m, 0.05);
    EXPECT_TRUE(ci.degenerate);
    EXPECT_EQ(ci.center, 4.0);
    EXPECT_EQ(ci.half_width, 0.0);
    EXPECT_TRUE(ci.covers(4.0));
    EXPECT_FALSE(ci.covers(4.5));
  }
}

TEST(ConfidenceInterval, AllMethodsCoincideForIdentity) {
  const auto data = sample_data(1, 40, 3);
  const BatchLayout L{8, 5, 0};
  const auto ref = confidence_interval(data, L, identity1(), Method::batching, 0.1);
  for (Method m : kAllMethods) {
    const auto ci = confidence_interval(data, L, identity1(), m, 0.1);
    EXPECT_NEAR(ci.center, ref.center, 1e-14);
    EXPECT_NEAR(ci.half_width, ref.half_width, 1e-14);
    EXPECT_NEAR(ci.lower, ci.center - ci.half_width, 1e-15);
    EXPECT_NEAR(ci.upper, ci.center + ci.half_width, 1e-15);
  }
}

TEST(Statistic, TwoBatchHandValue) {
  const auto s = statistic(as_points({1, 1, 3, 3}), BatchLayout{2, 2, 0}, identity1(), Method::batching, 0.0);
  EXPECT_NEAR(s.value, 2.0, 1e-14);
}

TEST(Statistic, QuadraticMatchesIndependentEvaluation) {
  // Batches {0.3,-0.1}, {0.5,1.2}, {-0.4,0.9}; f(x) = x + x^2; psi0 = 0. Values from a separate script.
  const auto data = as_points({0.3, -0.1, 0.5, 1.2, -0.4, 0.9});
  const BatchLayout L{3, 2, 0};
  EXPECT_NEAR(statistic(data, L, quad1(), Method::batching, 0.0).value, 1.4535519125683058, 1e-13);
  EXPECT_NEAR(statistic(data, L, quad1(), Method::sectioning, 0.0).value, 1.2082364529728915, 1e-13);
  EXPECT_NEAR(statistic(data, L, quad1(), Method::sb, 0.0).value, 1.2240437158469946, 1e-13);
  EXPECT_NEAR(statistic(data, L, quad1(), Method::sj, 0.0).value, 1.299301453418379, 1e-13);
}

TEST(Statistic, SectioningEqualsBatchingForIdentityAtGrandMean) {
  const auto data = sample_data(1, 30, 4);
  double gm = 0.0;
  for (const auto& x : data) gm += x[0];
  gm /= data.size();
  const BatchLayout L{5, 6, 0};
  EXPECT_NEAR(statistic(data, L, identity1(), Method::sectioning, gm).value,
              statistic(data, L, identity1(), Method::batching, gm).value, 1e-12);
}

TEST(Statistic, OddFunctionAntisymmetry) {
  auto data = sample_data(1, 30, 5);
  const BatchLayout L{5, 6, 0};
  const double w = statistic(data, L, identity1(), Method::batching, 0.0).value;
  for (auto& x : data) x = -x;
  EXPECT_NEAR(statistic(data, L, identity1(), Method::batching, 0.0).value, -w, 1e-13);
}

TEST(Statistic, BatchingPivotAntisymmetry) {
  const std::vector<double> z{0.3, -1.2, 0.8, 2.1, -0.4};
  std::vector<double> mz;
  for (double x : z) mz.push_back(-x);
  EXPECT_NEAR(batching_statistic(z, 0.0), -batching_statistic(mz, 0.0), 1e-14);
}

TEST(Statistic, CoverageEventIdentity) {
  const auto model = ModelSpec::from_polynomial(Polynomial(2, {{{1, 0}, 1.0}, {{0, 2}, 0.7}, {{1, 1}, -0.4}}),
                                                Vector::Zero(2));
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto data = sample_data(2, 24, seed);
    const BatchLayout L{6, 4, 0};
    for (Method m : kAllMethods) {
      const double alpha = 0.1;
      const auto ci = confidence_interval(data, L, model, m, alpha);
      const auto s = statistic(data, L, model, m, model.psi0);
      EXPECT_EQ(ci.covers(model.psi0), std::abs(s.value) <= ci.critical);
    }
  }
}

TEST(Statistic, LinearCollapse) {
  const auto model = ModelSpec::from_polynomial(Polynomial(2, {{{1, 0}, 2.0}, {{0, 1}, -1.0}, {{0, 0}, 0.5}}),
                                                Vector::Zero(2));
  ASSERT_TRUE(model.is_affine());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto data = sample_data(2, 20, 50 + seed);
    const BatchLayout L{4, 5, 0};
    const double ref = statistic(data, L, model, Method::batching, 0.1).value;
    for (Method m : kAllMethods) EXPECT_NEAR(statistic(data, L, model, m, 0.1).value, ref, 1e-12 * std::abs(ref) + 1e-13);
  }
}

TEST(Statistic, PositiveAffineInvariance) {
  const auto model = quad1();
  const auto scaled = model.scaled(2.5, -3.0);
  const auto data = sample_data(1, 30, 6);
  const BatchLayout L{5, 6, 0};
  for (Method m : kAllMethods) {
    const double a = statistic(data, L, model, m, 0.2).value;
    const double b = statistic(data, L, scaled, m, 2.5 * 0.2 - 3.0).value;
    EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST(Statistic, DegenerateGivesInfinity) {
  const auto s = statistic(as_points({2, 2, 2, 2}), BatchLayout{2, 2, 0}, identity1(), Method::batching, 1.0);
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.value, std::numeric_limits<double>::infinity());
}

TEST(OneSided, LowerCoversIffBelowUpperBound) {
  const auto data = sample_data(1, 20, 9);
  const auto ci = confidence_interval(data, BatchLayout{4, 5, 0}, identity1(), Method::batching, 0.1,
                                      Sided::lower_one_sided);
  EXPECT_TRUE(std::isinf(ci.lower));
  EXPECT_TRUE(ci.covers(ci.upper - 1.0));
  EXPECT_TRUE(ci.covers(ci.upper));
  EXPECT_FALSE(ci.covers(ci.upper + 1e-9));
  EXPECT_NEAR(ci.critical, t_quantile(3, 0.1), 1e-14);
}

TEST(EmpiricalCoverage, ExactForNormalMeans) {
  CoverageOptions o;
  o.reps = 100000;
  o.seed = 11;
  const auto reps = empirical_coverage(DistributionSpec::standard_normal(1), identity1(), BatchLayout{10, 5, 0},
                                       {kAllMethods.begin(), kAllMethods.end()}, 0.05, o);
  for (const auto& r : reps) {
    EXPECT_NEAR(r.coverage, 0.95, 0.004) << method_name(r.method);
    EXPECT_NEAR(r.halfwidth, 1.96 * std::sqrt(r.coverage * (1 - r.coverage) / 1e5), 1e-15);
  }
}

TEST(EmpiricalCoverage, RawSamplingAgreesWithExactBatchMeans) {
  // Both samplers draw from the same batch-mean distribution.
  CoverageOptions o;
  o.reps = 50000;
  o.seed = 12;
  const auto d = DistributionSpec::independent({Marginal::exp_centered});
  const auto a = empirical_coverage(d, quad1(), BatchLayout{5, 10, 0}, Method::sj, 0.1, o);
  o.exact_batch_means = false;
  const auto b = empirical_coverage(d, quad1(), BatchLayout{5, 10, 0}, Method::sj, 0.1, o);
  EXPECT_LT(std::abs(a.coverage - b.coverage), 3.0 * std::sqrt(2.0) * a.standard_error());
}

TEST(EmpiricalCoverage, SevereUndercoverageOfBatchingAtManyBatches) {
  CoverageOptions o;
  o.reps = 40000;
  o.seed = 13;
  const auto r = empirical_coverage(DistributionSpec::standard_normal(1), quad1(), BatchLayout{30, 30, 0},
                                    Method::batching, 0.2, o);
  // bias 1/n equals one standard error of the centre: P(|t_29 + 1| < 1.311) is about 0.62
  EXPECT_NEAR(r.coverage, 0.62, 0.03);
}

TEST(EmpiricalCoverage, DeterministicAcrossWorkers) {
  const auto model =
      ModelSpec::from_polynomial(Polynomial(2, {{{1, 0}, 1.0}, {{0, 2}, 1.0}}), Vector::Zero(2), Outer::sin);
  const std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  CoverageOptions o;
  o.reps = 20000;
  o.seed = 14;
  o.workers = 1;
  const auto a = empirical_coverage(DistributionSpec::normal_square(), model, BatchLayout{4, 8, 0}, methods, 0.1, o);
  o.workers = 3;
  const auto b = empirical_coverage(DistributionSpec::normal_square(), model, BatchLayout{4, 8, 0}, methods, 0.1, o);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].covered, b[i].covered);
}

TEST(EmpiricalCoverage, ApproachesNominalAsNGrows) {
  CoverageOptions o;
  o.reps = 40000;
  o.seed = 15;
  const auto r = empirical_coverage(DistributionSpec::independent({Marginal::exp_centered}), quad1(),
                                    BatchLayout{10, 1000, 0}, Method::sectioning, 0.1, o);
  EXPECT_LT(std::abs(r.coverage - 0.9), 3.0 * r.standard_error() + 0.005);
}

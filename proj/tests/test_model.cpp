#include "batchcov/model.hpp"
#include "batchcov/parallel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

using namespace batchcov;

namespace {

Polynomial xy_cubic() {  // x + 2y + y^2 + x^3
  return Polynomial(2, {{{1, 0}, 1.0}, {{0, 1}, 2.0}, {{0, 2}, 1.0}, {{3, 0}, 1.0}});
}

double fd_partial(const std::function<double(const Vector&)>& f, Vector x, std::vector<int> idx, double h) {
  if (idx.empty()) return f(x);
  const int i = idx.back();
  idx.pop_back();
  Vector xp = x, xm = x;
  xp[i] += h;
  xm[i] -= h;
  return (fd_partial(f, xp, idx, h) - fd_partial(f, xm, idx, h)) / (2.0 * h);
}

std::vector<Vector> draw(const DistributionSpec& d, std::size_t n, std::uint64_t seed) {
  auto rng = substream(seed, 0);
  std::vector<Vector> xs(n);
  for (auto& x : xs) x = d.sample(rng);
  return xs;
}

}  // namespace

TEST(DerivativeTensors, Quadratic) {
  const auto m = ModelSpec::from_polynomial(Polynomial(1, {{{1}, 1.0}, {{2}, 1.0}}), Vector::Zero(1));
  EXPECT_DOUBLE_EQ(m.u[0], 1.0);
  EXPECT_DOUBLE_EQ(m.v(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.w(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.psi0, 0.0);
}

TEST(DerivativeTensors, ExpChiModel) {
  const auto m = ModelSpec::from_polynomial(xy_cubic(), Vector::Zero(2));
  EXPECT_DOUBLE_EQ(m.u[0], 1.0);
  EXPECT_DOUBLE_EQ(m.u[1], 2.0);
  EXPECT_DOUBLE_EQ(m.v(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.v(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(m.v(1, 1), 1.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) EXPECT_DOUBLE_EQ(m.w(i, j, k), (i + j + k == 0) ? 1.0 : 0.0);
}

TEST(DerivativeTensors, LambdaScaledSquare) {
  const auto m = ModelSpec::from_polynomial(Polynomial(2, {{{1, 0}, 1.0}, {{0, 2}, 3.0}}), Vector::Zero(2));
  EXPECT_DOUBLE_EQ(m.u[0], 1.0);
  EXPECT_DOUBLE_EQ(m.u[1], 0.0);
  EXPECT_DOUBLE_EQ(m.v(1, 1), 3.0);
  EXPECT_DOUBLE_EQ(m.v(0, 1), 0.0);
  EXPECT_TRUE(m.w.is_zero());
}

TEST(DerivativeTensors, MatchFiniteDifferences) {
  const Polynomial p(3, {{{1, 0, 0}, 1.0}, {{0, 1, 1}, -0.7}, {{2, 1, 0}, 0.3}, {{0, 0, 3}, 1.25}, {{1, 1, 1}, 2.0},
                         {{4, 0, 0}, -0.2}});
  const Vector m = (Vector(3) << 0.4, -1.1, 0.8).finished();
  for (Outer g : {Outer::identity, Outer::sin, Outer::exp}) {
    const auto spec = ModelSpec::from_polynomial(p, m, g);
    const auto f = spec.f;
    const double h = 1e-4;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    for (int i = 0; i < 3; ++i) {
      EXPECT_LT(rel(fd_partial(f, m, {i}, h), spec.u[i]), 1e-6);
      for (int j = 0; j < 3; ++j) {
        EXPECT_LT(rel(fd_partial(f, m, {i, j}, h) / 2.0, spec.v(i, j)), 1e-6);
        for (int k = 0; k < 3; ++k) EXPECT_LT(rel(fd_partial(f, m, {i, j, k}, 1e-3) / 6.0, spec.w(i, j, k)), 1e-4);
      }
    }
    EXPECT_TRUE(is_symmetric(spec.v));
    EXPECT_TRUE(spec.w.is_symmetric());
  }
}

TEST(DerivativeTensors, SinOfShiftedSquareAtOrigin) {
  // sin(x + y^2): u = (1,0), v_yy = 1, w_xxx = -1/6.
  const auto m =
      ModelSpec::from_polynomial(Polynomial(2, {{{1, 0}, 1.0}, {{0, 2}, 1.0}}), Vector::Zero(2), Outer::sin);
  EXPECT_DOUBLE_EQ(m.u[0], 1.0);
  EXPECT_DOUBLE_EQ(m.u[1], 0.0);
  EXPECT_DOUBLE_EQ(m.v(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.v(0, 0), 0.0);
  EXPECT_NEAR(m.w(0, 0, 0), -1.0 / 6.0, 1e-15);
  EXPECT_DOUBLE_EQ(m.w(0, 1, 1), 0.0);
}

TEST(DerivativeTensors, DimensionMismatch) {
  EXPECT_THROW(Polynomial(2, {{{1}, 1.0}}), std::invalid_argument);
  EXPECT_THROW(ModelSpec::from_polynomial(xy_cubic(), Vector::Zero(3)), std::invalid_argument);
}

TEST(ModelSpec, CallbackRejectsAsymmetricTensors) {
  Matrix v(2, 2);
  v << 0, 1, 0, 0;
  EXPECT_THROW(ModelSpec::from_callback([](const Vector& x) { return x[0]; }, Vector::Zero(2),
                                        (Vector(2) << 1, 0).finished(), v, Tensor3(2)),
               std::invalid_argument);
}

TEST(BatchLayout, Validation) {
  EXPECT_THROW((BatchLayout{1, 5, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((BatchLayout{2, 0, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((BatchLayout{2, 5, -1}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((BatchLayout{2, 1, 0}.validate()));
}

TEST(DistributionSpec, RejectsNonPositiveDefinite) {
  Matrix c(2, 2);
  c << 1, 2, 2, 1;
  EXPECT_THROW(DistributionSpec::normal(Vector::Zero(2), c), std::invalid_argument);
}

TEST(DistributionSpec, SamplerMomentsMatchDeclared) {
  for (const auto& d : {DistributionSpec::independent({Marginal::exp_centered, Marginal::chisq1_centered}),
                        DistributionSpec::normal_square()}) {
    const std::size_t N = 1000000;
    const auto xs = draw(d, N, 3);
    for (int i = 0; i < d.d; ++i) {
      double s = 0.0, s2 = 0.0;
      for (const auto& x : xs) {
        s += x[i];
        s2 += x[i] * x[i];
      }
      const double m = s / N;
      const double var = s2 / N - m * m;
      EXPECT_LT(std::abs(m - d.mean[i]), 5.0 * std::sqrt(d.sigma(i, i) / N));
      // sd of the sample variance is sqrt((kappa4 + 2 sigma^2)/N)
      EXPECT_LT(std::abs(var - d.sigma(i, i)), 5.0 * std::sqrt((d.chi4(i, i, i, i) + 2.0) / N));
    }
  }
}

TEST(DistributionSpec, ExactBatchMeanMatchesAveraging) {
  // The exact batch-mean sampler and explicit averaging agree in mean and variance.
  const auto d = DistributionSpec::normal_square();
  const int n = 7;
  const std::size_t reps = 200000;
  auto rng = substream(5, 0);
  double s[2] = {0, 0}, s2[2] = {0, 0};
  for (std::size_t r = 0; r < reps; ++r) {
    const Vector m = d.sample_batch_mean(rng, n);
    for (int i = 0; i < 2; ++i) {
      s[i] += m[i];
      s2[i] += m[i] * m[i];
    }
  }
  for (int i = 0; i < 2; ++i) {
    const double var = s2[i] / reps - (s[i] / reps) * (s[i] / reps);
    EXPECT_NEAR(s[i] / reps, 0.0, 5.0 * std::sqrt(1.0 / n / reps));
    EXPECT_NEAR(var, 1.0 / n, 0.02 / n);
  }
}

TEST(Cumulants, GaussianHigherCumulantsVanish) {
  const auto xs = draw(DistributionSpec::standard_normal(1), 1000000, 7);
  const auto c = cumulants_from_samples(xs);
  // Var(k3) = 6/N, Var(k4) = 24/N for standard normal data
  EXPECT_LT(std::abs(c.chi3(0, 0, 0)), 5.0 * std::sqrt(6.0 / 1e6));
  EXPECT_LT(std::abs(c.chi4(0, 0, 0, 0)), 5.0 * std::sqrt(24.0 / 1e6));
  EXPECT_NEAR(c.sigma(0, 0), 1.0, 5.0 * std::sqrt(2.0 / 1e6));
}

TEST(Cumulants, CenteredExponential) {
  const auto xs = draw(DistributionSpec::independent({Marginal::exp_centered}), 1000000, 8);
  const auto c = cumulants_from_samples(xs);
  EXPECT_NEAR(c.sigma(0, 0), 1.0, 0.02);
  EXPECT_NEAR(c.chi3(0, 0, 0), 2.0, 0.1);
  EXPECT_NEAR(c.chi4(0, 0, 0, 0), 6.0, 0.6);
}

TEST(Cumulants, NormalAndItsSquare) {
  const auto xs = draw(DistributionSpec::normal_square(), 1000000, 9);
  const auto c = cumulants_from_samples(xs);
  EXPECT_NEAR(c.chi3(0, 0, 1), std::sqrt(2.0), 0.05);
  EXPECT_NEAR(c.chi3(1, 1, 1), 2.0 * std::sqrt(2.0), 0.1);
  EXPECT_NEAR(c.chi3(0, 0, 0), 0.0, 0.02);
  EXPECT_NEAR(c.chi4(0, 0, 1, 1), 4.0, 0.4);
  EXPECT_TRUE(c.chi3.is_symmetric());
  EXPECT_TRUE(c.chi4.is_symmetric());
  // declared cumulants agree with the closed forms
  const auto d = DistributionSpec::normal_square();
  EXPECT_NEAR(d.chi3(0, 1, 0), std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(d.chi4(1, 1, 1, 1), 12.0, 1e-12);
  EXPECT_NEAR(d.chi4(1, 0, 1, 0), 4.0, 1e-12);
}

TEST(Cumulants, ShrinkAtRootNRate) {
  Matrix cov(2, 2);
  cov << 1.0, 0.3, 0.3, 2.0;
  const auto d = DistributionSpec::normal(Vector::Zero(2), cov);
  // average over a few seeds to steady the sup-norm
  auto sup = [&](std::size_t n) {
    double a3 = 0.0, a4 = 0.0;
    for (std::uint64_t s = 0; s < 4; ++s) {
      const auto c = cumulants_from_samples(draw(d, n, 100 + s + n));
      a3 += c.chi3.max_abs();
      a4 += c.chi4.max_abs();
    }
    return std::pair{a3, a4};
  };
  const auto [s3a, s4a] = sup(10000);
  const auto [s3b, s4b] = sup(160000);
  const double expect = std::sqrt(16.0);
  EXPECT_GT(s3a / s3b, 0.5 * expect);
  EXPECT_LT(s3a / s3b, 2.0 * expect);
  EXPECT_GT(s4a / s4b, 0.5 * expect);
  EXPECT_LT(s4a / s4b, 2.0 * expect);
}

TEST(Cumulants, FloorAndSingularity) {
  EXPECT_THROW(cumulants_from_samples(draw(DistributionSpec::standard_normal(2), 100, 1)), std::invalid_argument);
  std::vector<Vector> flat(1000, (Vector(2) << 1.0, 2.0).finished());
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] *= static_cast<double>(i % 7);
  EXPECT_THROW(cumulants_from_samples(flat), std::invalid_argument);
}

#include "batchcov/dependent.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>
#include <stdexcept>

using namespace batchcov;

namespace {

ChainSpec two_state() {
  ChainSpec c;
  c.kind = ChainKind::finite_markov;
  c.transition.resize(2, 2);
  c.transition << 0.7, 0.3, 0.4, 0.6;
  c.g_values = (Vector(2) << 0.0, 1.0).finished();
  c.atom = 0;
  return c;
}

ChainSpec ar1(double phi) {
  ChainSpec c;
  c.kind = ChainKind::ar1;
  c.phi = phi;
  c.ar_mean = 2.0;
  return c;
}

}  // namespace

TEST(Chain, StationaryDistribution) {
  const auto c = two_state();
  const Vector pi = stationary_distribution(c.transition);
  EXPECT_NEAR(pi[0], 4.0 / 7.0, 1e-14);
  EXPECT_NEAR(pi[1], 3.0 / 7.0, 1e-14);
  EXPECT_NEAR(c.target(), 3.0 / 7.0, 1e-14);
  EXPECT_NEAR(c.mean_cycle_length(), 7.0 / 4.0, 1e-14);
}

TEST(Chain, Mm1Target) {
  ChainSpec c;
  c.kind = ChainKind::mm1_waiting;
  c.arrival_rate = 0.5;
  c.service_rate = 1.0;
  EXPECT_DOUBLE_EQ(c.target(), 1.0);
  EXPECT_DOUBLE_EQ(c.mean_cycle_length(), 2.0);
  auto rng = substream(1, 0);
  const auto path = simulate(c, 2000000, rng);
  const double mean = std::accumulate(path.begin(), path.end(), 0.0) / path.size();
  EXPECT_NEAR(mean, 1.0, 0.1);
}

TEST(Chain, Ar1Moments) {
  const auto c = ar1(0.6);
  auto rng = substream(2, 0);
  const auto path = simulate(c, 400000, rng);
  double m = 0.0, s = 0.0;
  for (double x : path) m += x;
  m /= path.size();
  for (double x : path) s += (x - m) * (x - m);
  s /= path.size();
  EXPECT_NEAR(m, 2.0, 0.02);
  EXPECT_NEAR(s, 1.0 / (1.0 - 0.36), 0.03);
  EXPECT_THROW(c.mean_cycle_length(), std::invalid_argument);
}

TEST(Chain, TransitionFrequencies) {
  const auto c = two_state();
  auto rng = substream(3, 0);
  const auto path = simulate(c, 200000, rng);
  double from0 = 0, to1 = 0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    if (path[i] == 0.0) {
      ++from0;
      to1 += path[i + 1] == 1.0;
    }
  EXPECT_NEAR(to1 / from0, 0.3, 0.01);
}

TEST(Chain, ValidationErrors) {
  auto c = two_state();
  c.transition(0, 1) = 0.4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = two_state();
  c.g_values = Vector::Zero(3);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = two_state();
  c.atom = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  ChainSpec q;
  q.kind = ChainKind::mm1_waiting;
  q.arrival_rate = 1.0;
  EXPECT_THROW(q.validate(), std::invalid_argument);
  EXPECT_THROW(ar1(1.0).validate(), std::invalid_argument);
}

TEST(GapBatches, UsesTheRightIndices) {
  std::vector<double> path(20);
  std::iota(path.begin(), path.end(), 0.0);
  const auto b = gap_batches(path, 3, 3, 2);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0], (std::vector<double>{0, 1, 2}));
  EXPECT_EQ(b[1], (std::vector<double>{5, 6, 7}));
  EXPECT_EQ(b[2], (std::vector<double>{10, 11, 12}));
  EXPECT_THROW(gap_batches(path, 6, 3, 2), std::invalid_argument);
}

TEST(GapBatches, DefaultGap) {
  EXPECT_EQ(default_gap(100), 10);
  EXPECT_EQ(default_gap(50), 8);
  EXPECT_EQ(default_gap(1), 1);
  EXPECT_THROW(default_gap(10, 1.0), std::invalid_argument);
}

TEST(Regenerative, CycleReconstruction) {
  const std::vector<double> path{1, 0, 1, 1, 0, 0, 1, 0, 1};
  const auto cycles = regenerative_pairs(
      path, [](double x) { return x == 0.0; }, [](double x) { return x; });
  ASSERT_EQ(cycles.size(), 3u);
  EXPECT_EQ(cycles[0].Y, 2.0);
  EXPECT_EQ(cycles[0].tau, 3);
  EXPECT_EQ(cycles[1].Y, 0.0);
  EXPECT_EQ(cycles[1].tau, 1);
  EXPECT_EQ(cycles[2].Y, 1.0);
  EXPECT_EQ(cycles[2].tau, 2);
  EXPECT_THROW(regenerative_pairs(std::vector<double>{1, 0, 1}, two_state()), std::invalid_argument);
  EXPECT_THROW(regenerative_pairs(path, ar1(0.5)), std::invalid_argument);
}

TEST(Regenerative, CycleMeansMatchTheory) {
  const auto c = two_state();
  auto rng = substream(4, 0);
  const auto cycles = regenerative_pairs(simulate(c, 500000, rng), c);
  double Y = 0.0, tau = 0.0;
  for (const auto& p : cycles) {
    Y += p.Y;
    tau += p.tau;
  }
  EXPECT_NEAR(tau / cycles.size(), 1.75, 0.01);
  EXPECT_NEAR(Y / tau, 3.0 / 7.0, 0.005);
}

TEST(RatioModel, TensorsAtUnitPoint) {
  const auto m = ratio_model((Vector(2) << 1.0, 1.0).finished());
  EXPECT_DOUBLE_EQ(m.psi0, 1.0);
  EXPECT_DOUBLE_EQ(m.u[0], 1.0);
  EXPECT_DOUBLE_EQ(m.u[1], -1.0);
  EXPECT_DOUBLE_EQ(m.v(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.v(0, 1), -0.5);
  EXPECT_DOUBLE_EQ(m.v(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.w(0, 1, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.w(1, 1, 1), -1.0);
  EXPECT_DOUBLE_EQ(m.w(0, 0, 1), 0.0);
  EXPECT_THROW(ratio_model((Vector(2) << 1.0, 0.0).finished()), std::invalid_argument);
}

TEST(RatioModel, TaylorAgreesWithFunction) {
  const Vector mu = (Vector(2) << 0.6, 1.75).finished();
  const auto m = ratio_model(mu);
  const Vector h = (Vector(2) << 0.01, -0.02).finished();
  const double taylor = m.psi0 + m.u.dot(h) + h.dot(m.v * h) + m.w.contract(h);
  EXPECT_NEAR(taylor, (mu[0] + h[0]) / (mu[1] + h[1]), 1e-7);
}

TEST(DependentCoverage, TwoStateRegenerative) {
  DependentOptions o;
  o.approach = DependentApproach::regenerative;
  o.coverage.reps = 2000;
  o.coverage.seed = 5;
  const auto r = dependent_coverage(two_state(), {Method::batching, Method::sj}, 10, 100, 0.1, o);
  for (const auto& rep : r) EXPECT_NEAR(rep.coverage, 0.9, 0.05) << method_name(rep.method);
}

TEST(DependentCoverage, IidChainIgnoresTheGap) {
  auto c = two_state();
  c.transition << 0.5, 0.5, 0.5, 0.5;
  DependentOptions o;
  o.approach = DependentApproach::gap;
  o.coverage.reps = 20000;
  o.coverage.seed = 6;
  o.gap = 0;
  const auto a = dependent_coverage(c, {Method::batching}, 5, 20, 0.1, o)[0];
  o.gap = 10;
  o.coverage.seed = 7;
  const auto b = dependent_coverage(c, {Method::batching}, 5, 20, 0.1, o)[0];
  EXPECT_LT(std::abs(a.coverage - b.coverage), 4.0 * std::hypot(a.standard_error(), b.standard_error()));
}

TEST(DependentCoverage, GapRepairsCorrelatedBatches) {
  DependentOptions o;
  o.approach = DependentApproach::gap;
  o.coverage.reps = 20000;
  o.coverage.seed = 8;
  o.gap = 0;
  const auto a = dependent_coverage(ar1(0.9), {Method::batching}, 10, 20, 0.1, o)[0];
  o.gap = 100;
  const auto b = dependent_coverage(ar1(0.9), {Method::batching}, 10, 20, 0.1, o)[0];
  EXPECT_GT(b.coverage, a.coverage + 3.0 * std::hypot(a.standard_error(), b.standard_error()));
  EXPECT_THROW(dependent_coverage(ar1(0.9), {Method::batching}, 10, 20, 0.1, DependentOptions{}),
               std::invalid_argument);
}

TEST(Trajectory, CsvLayout) {
  std::ostringstream os;
  write_trajectory_csv(os, {0, 1, 1}, two_state());
  EXPECT_EQ(os.str(), "index,state,g\n0,0,0\n1,1,1\n2,1,1\n");
}

TEST(Regenerative, TwoStateExample) {
  const std::vector<double> path{0, 1, 1, 0, 1, 0};
  const auto c = two_state();
  const auto cycles = regenerative_pairs(path, c);
  ASSERT_EQ(cycles.size(), 2u);
  EXPECT_EQ(cycles[0].Y, 2.0);
  EXPECT_EQ(cycles[0].tau, 3);
  EXPECT_EQ(cycles[1].Y, 1.0);
  EXPECT_EQ(cycles[1].tau, 2);
}

TEST(Regenerative, BernoulliCycleLength) {
  const double p = 0.35;
  auto c = two_state();
  c.transition << 1 - p, p, 1 - p, p;
  auto rng = substream(9, 0);
  const auto cycles = regenerative_pairs(simulate(c, 400000, rng), c);
  double tau = 0.0;
  for (const auto& q : cycles) tau += q.tau;
  EXPECT_NEAR(tau / cycles.size(), 1.0 / (1.0 - p), 0.01);
}

TEST(Regenerative, Mm1CyclesStartEmpty) {
  ChainSpec c;
  c.kind = ChainKind::mm1_waiting;
  c.arrival_rate = 0.6;
  auto rng = substream(10, 0);
  const auto path = simulate(c, 20000, rng);
  std::vector<std::size_t> visits;
  for (std::size_t i = 0; i < path.size(); ++i)
    if (path[i] == 0.0) visits.push_back(i);
  const auto cycles = regenerative_pairs(path, c);
  ASSERT_EQ(cycles.size(), visits.size() - 1);
  // cycle k runs from one empty-queue visit to the next, so lengths are the visit spacings
  std::size_t total = 0;
  for (std::size_t k = 0; k < cycles.size(); ++k) {
    EXPECT_EQ(static_cast<std::size_t>(cycles[k].tau), visits[k + 1] - visits[k]);
    total += cycles[k].tau;
  }
  EXPECT_EQ(total, visits.back() - visits.front());
}

TEST(RatioModel, ExampleAndFiniteDifferences) {
  const Vector mu = (Vector(2) << 2.0, 4.0).finished();
  const auto m = ratio_model(mu);
  EXPECT_DOUBLE_EQ(m.psi0, 0.5);
  EXPECT_DOUBLE_EQ(m.u[0], 0.25);
  EXPECT_DOUBLE_EQ(m.u[1], -0.125);
  const double h = 1e-3;
  auto f = [&](double dx, double dy) { return m.f((Vector(2) << mu[0] + dx, mu[1] + dy).finished()); };
  // v = Hessian / 2
  const double fxx = (f(h, 0) - 2 * f(0, 0) + f(-h, 0)) / (h * h);
  const double fyy = (f(0, h) - 2 * f(0, 0) + f(0, -h)) / (h * h);
  const double fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h);
  EXPECT_NEAR(m.v(0, 0), fxx / 2, 1e-6);
  EXPECT_NEAR(m.v(1, 1), fyy / 2, 1e-6);
  EXPECT_NEAR(m.v(0, 1), fxy / 2, 1e-6);
  // w = third derivative / 6
  const double fyyy = (f(0, 2 * h) - 2 * f(0, h) + 2 * f(0, -h) - f(0, -2 * h)) / (2 * h * h * h);
  const double fxyy = ((f(h, h) - 2 * f(h, 0) + f(h, -h)) - (f(-h, h) - 2 * f(-h, 0) + f(-h, -h))) / (2 * h * h * h);
  EXPECT_NEAR(m.w(1, 1, 1), fyyy / 6, 1e-6);
  EXPECT_NEAR(m.w(0, 1, 1), fxyy / 6, 1e-6);
  EXPECT_EQ(m.w(0, 0, 0), 0.0);
}

TEST(DependentCoverage, Ar1GapMovesTowardNominal) {
  DependentOptions o;
  o.approach = DependentApproach::gap;
  o.coverage.reps = 100000;
  o.coverage.seed = 11;
  o.gap = 0;
  const auto a = dependent_coverage(ar1(0.5), {Method::batching}, 10, 50, 0.1, o)[0];
  o.gap = -1;  // ceil(sqrt(50)) = 8
  const auto b = dependent_coverage(ar1(0.5), {Method::batching}, 10, 50, 0.1, o)[0];
  EXPECT_LT(std::abs(b.coverage - 0.9), std::abs(a.coverage - 0.9)) << a.coverage << " " << b.coverage;
}

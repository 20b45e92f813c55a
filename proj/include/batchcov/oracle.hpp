#pragma once

#include "batchcov/coeff_mc.hpp"
#include "batchcov/model.hpp"
#include "batchcov/stats_core.hpp"
#include "batchcov/t_dist.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace batchcov {

/// psi(P) = E X + lambda (E X)^2 with standard normal data and two batches.
struct K2Model {
  double lambda = 1.0;

  ModelSpec model() const {
    return ModelSpec::from_polynomial(Polynomial(1, {{{1}, 1.0}, {{2}, lambda}}), Vector::Zero(1));
  }
};

/// Exact n^{-1} coverage-error coefficient for K = 2.
inline double k2_coefficient(const K2Model& m, Method method, double q) {
  if (!(q > 0.0)) throw std::invalid_argument("k2_coefficient: q must be positive");
  const double l2 = m.lambda * m.lambda;
  const double q2 = q * q;
  const double pi = std::numbers::pi;
  const double r = q2 + 1.0;
  switch (method) {
    case Method::batching: return -q * (q2 - 1.0) * (q2 - 1.0) / (r * r * r) * 4.0 / pi * l2;
    case Method::sectioning:
      return l2 * (-std::pow(q, 5) / (r * r * r) * 4.0 / pi + q / (r * r) / pi);
    case Method::sb: return -std::pow(q, 5) / (r * r * r) * 4.0 / pi * l2;
    case Method::sj: return -q / r * 4.0 / pi * l2;
  }
  return 0.0;
}

struct OrderingResult {
  std::vector<std::pair<Method, double>> sorted;  // ascending coefficient
  bool checked = false;                           // false when lambda = 0
  bool holds = false;                             // SJ < SB < S < B <= 0
};

inline OrderingResult k2_ordering_check(double lambda, double q) {
  if (!(q >= 1.0)) throw std::invalid_argument("k2_ordering_check: q must be >= 1");
  OrderingResult out;
  K2Model m{lambda};
  for (Method me : kAllMethods) out.sorted.emplace_back(me, k2_coefficient(m, me, q));
  std::stable_sort(out.sorted.begin(), out.sorted.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  if (lambda == 0.0) return out;
  out.checked = true;
  const double sj = k2_coefficient(m, Method::sj, q);
  const double sb = k2_coefficient(m, Method::sb, q);
  const double s = k2_coefficient(m, Method::sectioning, q);
  const double b = k2_coefficient(m, Method::batching, q);
  out.holds = sj < sb && sb < s && s < b && b <= 0.0;
  if (!out.holds)
    throw std::logic_error("K=2 ordering SJ < SB < S < B <= 0 violated at lambda=" + std::to_string(lambda) +
                           ", q=" + std::to_string(q));
  return out;
}

struct SlopePoint {
  int n = 0;
  double coverage = 0.0;
  double se = 0.0;
};

struct SlopeResult {
  double slope = 0.0;
  double se = 0.0;
  double intercept = 0.0;
  double nominal = 0.0;
  std::vector<SlopePoint> points;
};

/// Weighted least squares of (coverage - nominal) on 1/n with an intercept.
inline SlopeResult fit_coverage_slope(const std::vector<SlopePoint>& pts, double nominal) {
  if (pts.size() < 2) throw std::invalid_argument("coverage_slope needs at least two grid points");
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& p : pts) {
    const double var = std::max(p.se * p.se, 1e-300);
    const double w = 1.0 / var;
    const double x = 1.0 / p.n;
    const double y = p.coverage - nominal;
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0.0)) throw std::invalid_argument("coverage_slope: grid must contain distinct n values");
  SlopeResult r;
  r.slope = (sw * sxy - sx * sy) / det;
  r.intercept = (sxx * sy - sx * sxy) / det;
  r.se = std::sqrt(sw / det);
  r.nominal = nominal;
  r.points = pts;
  return r;
}

struct SlopeOptions {
  std::uint64_t reps = 1000000;
  std::uint64_t seed = 1;
  int workers = 1;
  std::optional<double> expected_c;  // enables the resolution precondition
};

/// Reps needed for the MC half-width to fall below |c| / (5 max n).
inline std::uint64_t required_slope_reps(double expected_c, int max_n, double nominal) {
  const double target = std::abs(expected_c) / (5.0 * max_n);
  const double sd = std::sqrt(nominal * (1.0 - nominal));
  return static_cast<std::uint64_t>(std::ceil(std::pow(1.96 * sd / target, 2)));
}

/// Brute-force estimate of c by regressing coverage on 1/n.
inline SlopeResult coverage_slope(const DistributionSpec& dist, const ModelSpec& model, int K, Method method,
                                  double alpha, const std::vector<int>& n_grid, const SlopeOptions& opt) {
  if (n_grid.size() < 2) throw std::invalid_argument("coverage_slope needs |n_grid| >= 2");
  const double nominal = 1.0 - alpha;
  const int max_n = *std::max_element(n_grid.begin(), n_grid.end());
  if (opt.expected_c && *opt.expected_c != 0.0) {
    const auto need = required_slope_reps(*opt.expected_c, max_n, nominal);
    if (opt.reps < need)
      throw std::invalid_argument("coverage_slope: reps=" + std::to_string(opt.reps) + " too small; need at least " +
                                  std::to_string(need) + " for the requested resolution");
  }
  std::vector<SlopePoint> pts;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    CoverageOptions co;
    co.reps = opt.reps;
    co.seed = splitmix64(opt.seed + g);
    co.workers = opt.workers;
    const auto rep = empirical_coverage(dist, model, BatchLayout{K, n_grid[g], 0}, method, alpha, co);
    pts.push_back({n_grid[g], rep.coverage, rep.standard_error()});
  }
  return fit_coverage_slope(pts, nominal);
}

struct DiagnosticPoint {
  int n = 0;
  double error = 0.0;  // empirical coverage minus t coverage
  double se = 0.0;
  double n_scaled = 0.0;     // n |error|
  double sqrtn_scaled = 0.0; // sqrt(n) |error|
};

/// Sectioning with K = 2 on f(x,y) = x + y^2, (X,Y) ~ N(0, 2I): error magnitudes across n.
inline std::vector<DiagnosticPoint> two_batch_sectioning_diagnostic(const std::vector<int>& n_grid, double q, std::uint64_t reps,
                                                std::uint64_t seed, int workers = 1) {
  const auto model = ModelSpec::from_polynomial(Polynomial(2, {{{1, 0}, 1.0}, {{0, 2}, 1.0}}), Vector::Zero(2));
  const auto dist = DistributionSpec::normal(Vector::Zero(2), 2.0 * Matrix::Identity(2, 2));
  const double nominal = t_central_probability(1, q);
  const double alpha = 1.0 - nominal;
  std::vector<DiagnosticPoint> out;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    CoverageOptions co;
    co.reps = reps;
    co.seed = splitmix64(seed + g);
    co.workers = workers;
    const auto rep = empirical_coverage(dist, model, BatchLayout{2, n_grid[g], 0}, Method::sectioning, alpha, co);
    DiagnosticPoint p;
    p.n = n_grid[g];
    p.error = rep.coverage - nominal;
    p.se = rep.standard_error();
    p.n_scaled = p.n * std::abs(p.error);
    p.sqrtn_scaled = std::sqrt(static_cast<double>(p.n)) * std::abs(p.error);
    out.push_back(p);
  }
  return out;
}

}  // namespace batchcov

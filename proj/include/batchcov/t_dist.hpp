#pragma once

#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace batchcov {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Normal density with the given variance (not standard deviation).
inline double normal_pdf(double x, double variance) {
  return std::exp(-0.5 * x * x / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double t_pdf(int df, double t) {
  const double nu = df;
  const double log_c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
  return std::exp(log_c - 0.5 * (nu + 1.0) * std::log1p(t * t / nu));
}

/// P(T > t) for T ~ t_df, accurate in both tails.
inline double t_upper_tail(int df, double t) {
  if (df < 1) throw std::invalid_argument("t distribution needs df >= 1, got " + std::to_string(df));
  if (t == 0.0) return 0.5;
  const double nu = df;
  const double t2 = t * t;
  // Tail mass 0.5 * I_{nu/(nu+t^2)}(nu/2, 1/2); the complementary form keeps precision near t = 0.
  double tail;
  if (t2 < nu)
    tail = 0.5 * boost::math::ibetac(0.5, 0.5 * nu, t2 / (nu + t2));
  else
    tail = 0.5 * boost::math::ibeta(0.5 * nu, 0.5, nu / (nu + t2));
  return t > 0.0 ? tail : 1.0 - tail;
}

inline double t_cdf(int df, double t) { return 1.0 - t_upper_tail(df, t); }

/// P(-q <= T <= q).
inline double t_central_probability(int df, double q) {
  if (q <= 0.0) return 0.0;
  const double nu = df;
  return boost::math::ibeta(0.5, 0.5 * nu, q * q / (nu + q * q));
}

/// Upper p-quantile: returns q with P(T > q) = p.
inline double t_quantile(int df, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("t_quantile: p must lie in (0,1), got " + std::to_string(p));
  if (df < 1) throw std::invalid_argument("t_quantile: df must be >= 1, got " + std::to_string(df));
  if (p == 0.5) return 0.0;
  if (p > 0.5) return -t_quantile(df, 1.0 - p);

  double lo = 0.0;
  double hi = 1.0;
  while (t_upper_tail(df, hi) > p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw std::runtime_error("t_quantile: bracket search diverged");
  }
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double g = t_upper_tail(df, x) - p;  // decreasing in x
    if (g == 0.0) return x;
    if (g > 0.0)
      lo = x;
    else
      hi = x;
    const double step = g / t_pdf(df, x);
    double next = x + step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x)) || hi - lo <= 1e-15 * std::max(1.0, hi)) return next;
    x = next;
  }
  return x;
}

/// Two-sided critical value t_{df, alpha/2}.
inline double t_critical(int df, double alpha) { return t_quantile(df, 0.5 * alpha); }

}  // namespace batchcov

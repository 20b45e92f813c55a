#pragma once

#include "batchcov/edgeworth.hpp"
#include "batchcov/model.hpp"
#include "batchcov/parallel.hpp"
#include "batchcov/stats_core.hpp"
#include "batchcov/t_dist.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace batchcov {

/// Raised when a numeric guard trips (e.g. too many rejected replications).
class NumericGuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Algorithm { alg1, alg2 };

inline std::string algorithm_name(Algorithm a) { return a == Algorithm::alg1 ? "alg1" : "alg2"; }

/// Critical value given either directly or through a nominal two-sided level.
struct CriticalValue {
  std::optional<double> q;
  std::optional<double> alpha;

  static CriticalValue from_q(double q) { return {q, std::nullopt}; }
  static CriticalValue from_alpha(double alpha) { return {std::nullopt, alpha}; }

  double resolve(int K) const {
    if (q) {
      if (!(*q > 0.0)) throw std::invalid_argument("critical value q must be positive");
      return *q;
    }
    if (alpha) return t_quantile(K - 1, 0.5 * *alpha);
    throw std::invalid_argument("critical value needs q or alpha");
  }
};

/// Derivative tensors u = grad f, v = Hessian/2, w = third derivative/6.
struct ModelTensors {
  Vector u;
  Matrix v;
  Tensor3 w;

  static ModelTensors of(const ModelSpec& m) { return {m.u, m.v, m.w}; }
  int dim() const { return static_cast<int>(u.size()); }
};

struct SchemeDecomposition {
  double a = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double lambda = 0.0;
  double e = 0.0;
  double E2 = 0.0;
  double b1_prime = 0.0;
  double lambda_prime = 0.0;
};

struct Surrogates {
  Vector A0;
  std::vector<Vector> B;
};

/// X_1..X_K iid N(0, L L^T); returns their mean and the deviations from it.
inline void draw_surrogates_chol(const Matrix& chol, int K, Rng& rng, Surrogates& out) {
  const int d = static_cast<int>(chol.rows());
  std::normal_distribution<double> nd;
  out.B.resize(K);
  out.A0 = Vector::Zero(d);
  Vector z(d);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < d; ++j) z[j] = nd(rng);
    out.B[i] = chol.triangularView<Eigen::Lower>() * z;
    out.A0 += out.B[i];
  }
  out.A0 /= static_cast<double>(K);
  for (int i = 0; i < K; ++i) out.B[i] -= out.A0;
}

inline Surrogates draw_surrogates(const Matrix& sigma, int K, Rng& rng) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("draw_surrogates: covariance is not positive definite");
  Surrogates s;
  draw_surrogates_chol(llt.matrixL(), K, rng, s);
  return s;
}

/// Expansion polynomials of the method's pivot at one surrogate draw.
inline SchemeDecomposition scheme_polynomials(Method method, const Vector& A0, const std::vector<Vector>& B,
                                              const ModelTensors& t) {
  const int K = static_cast<int>(B.size());
  const double Kd = K;
  std::vector<double> s0(K), s1(K), s2(K), vi(K), wi(K);
  Vector Ai(A0.size());
  double vbar = 0.0, wbar = 0.0;
  for (int i = 0; i < K; ++i) {
    s0[i] = t.u.dot(B[i]);
    Ai = A0 + B[i];
    vi[i] = Ai.dot(t.v * Ai);
    wi[i] = t.w.contract(Ai);
    vbar += vi[i];
    wbar += wi[i];
  }
  vbar /= Kd;
  wbar /= Kd;
  const double v0 = A0.dot(t.v * A0);
  const double w0 = t.w.contract(A0);

  SchemeDecomposition out;
  out.a = t.u.dot(A0);
  switch (method) {
    case Method::sectioning:
      out.b1 = v0;
      out.b2 = w0;
      for (int i = 0; i < K; ++i) {
        s1[i] = vi[i] - v0;
        s2[i] = wi[i] - w0;
      }
      break;
    case Method::batching:
    case Method::sb:
      out.b1 = method == Method::batching ? vbar : v0;
      out.b2 = method == Method::batching ? wbar : w0;
      for (int i = 0; i < K; ++i) {
        s1[i] = vi[i] - vbar;
        s2[i] = wi[i] - wbar;
      }
      break;
    case Method::sj: {
      std::vector<double> c(K), dd(K);
      double cbar = 0.0, dbar = 0.0;
      Vector L(A0.size());
      for (int i = 0; i < K; ++i) {
        L = A0 - B[i] / (Kd - 1.0);
        c[i] = (Kd - 1.0) * L.dot(t.v * L);
        dd[i] = (Kd - 1.0) * t.w.contract(L);
        cbar += c[i];
        dbar += dd[i];
      }
      cbar /= Kd;
      dbar /= Kd;
      out.b1 = Kd * v0 - cbar;
      out.b2 = Kd * w0 - dbar;
      for (int i = 0; i < K; ++i) {
        s1[i] = -(c[i] - cbar);
        s2[i] = -(dd[i] - dbar);
      }
      break;
    }
  }
  const Vector v_row = t.v.row(0).transpose();
  for (int i = 0; i < K; ++i) {
    out.E2 += s0[i] * s0[i];
    out.lambda += 2.0 * s0[i] * s1[i];
    out.e += s1[i] * s1[i] + 2.0 * s0[i] * s2[i];
    out.lambda_prime += 4.0 * s0[i] * v_row.dot(B[i]);
  }
  out.b1_prime = 2.0 * v_row.dot(A0);
  return out;
}

struct ImplicitStep {
  double F_plus = 0.0;
  double F_minus = 0.0;
  double y_x = 0.0;
  double y_xx = 0.0;
  double y_x_minus = 0.0;
  double y_xx_minus = 0.0;
  SchemeDecomposition dec_plus;
  SchemeDecomposition dec_minus;
};

/// First and second n^{-1/2}-derivatives of the critical first coordinate, at both boundaries.
inline ImplicitStep implicit_step(Method method, const Vector& A0, const std::vector<Vector>& B, const ModelTensors& t,
                                  double q, double E2) {
  if (!(E2 > 0.0)) throw std::invalid_argument("implicit_step: E2 must be positive");
  const double u1 = t.u[0];
  if (u1 == 0.0) throw std::invalid_argument("implicit_step: first gradient coordinate is zero");
  const int K = static_cast<int>(B.size());
  const double kk = std::sqrt(static_cast<double>(K) * (K - 1));
  const double sE = std::sqrt(E2);
  double rest = 0.0;
  for (Eigen::Index i = 1; i < t.u.size(); ++i) rest += t.u[i] * A0[i];

  ImplicitStep out;
  for (int sgn : {+1, -1}) {
    const double F = (sgn * q * sE / kk - rest) / u1;
    Vector A0s = A0;
    A0s[0] = F;
    const SchemeDecomposition dec = scheme_polynomials(method, A0s, B, t);
    const double a = dec.a, b1 = dec.b1, b2 = dec.b2, lam = dec.lambda, e = dec.e;
    const double Fx = b1 / sE - 0.5 * lam * a / (E2 * sE);
    const double Fxx = (a * (-e / E2 + 0.75 * lam * lam / (E2 * E2)) - b1 * lam / E2 + 2.0 * b2) / sE;
    const double Fy = u1 / sE;
    const double Fxy = dec.b1_prime / sE - 0.5 * (dec.lambda_prime * a + lam * u1) / (E2 * sE);
    const double yx = -Fx / Fy;
    const double yxx = -(Fxx + 2.0 * Fxy * yx) / Fy;
    if (sgn > 0) {
      out.F_plus = F;
      out.y_x = yx;
      out.y_xx = yxx;
      out.dec_plus = dec;
    } else {
      out.F_minus = F;
      out.y_x_minus = yx;
      out.y_xx_minus = yxx;
      out.dec_minus = dec;
    }
  }
  return out;
}

/// Everything a replication needs, in coordinates where u_1 > 0.
struct Alg1Setup {
  Method method = Method::sectioning;
  int K = 5;
  double q = 1.0;
  ModelTensors tensors;
  Matrix chol;
  EdgeworthContext edgeworth;
  Vector regression;  // sigma_01 sigma_11^{-1}
  double cond_var = 0.0;  // conditional variance of A_{0,1} given the other coordinates
  double e2_floor = 0.0;
  SignedPermutation relabel;

  Alg1Setup(Method m, int K_, double q_, ModelTensors t, const Matrix& sigma, const Tensor3& chi3, const Tensor4& chi4,
            SignedPermutation p)
      : method(m), K(K_), q(q_), tensors(std::move(t)), edgeworth(sigma, chi3, chi4), relabel(std::move(p)) {
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance is not positive definite");
    chol = llt.matrixL();
    const int d = static_cast<int>(sigma.rows());
    if (d == 1) {
      regression = Vector::Zero(0);
      cond_var = sigma(0, 0) / K;
    } else {
      const Vector s01 = sigma.block(0, 1, 1, d - 1).transpose();
      const Matrix s11 = sigma.block(1, 1, d - 1, d - 1);
      regression = s11.llt().solve(s01);
      cond_var = (sigma(0, 0) - s01.dot(regression)) / K;
    }
    e2_floor = 1e-12 * tensors.u.squaredNorm() * K;
  }
};

/// Signed permutation putting a non-negligible, positive gradient entry in the first coordinate.
inline SignedPermutation normalizing_relabel(const Vector& u) {
  const int d = static_cast<int>(u.size());
  SignedPermutation p = SignedPermutation::identity(d);
  if (std::abs(u[0]) < 1e-8) {
    Eigen::Index best = 0;
    u.cwiseAbs().maxCoeff(&best);
    std::swap(p.source[0], p.source[best]);
  }
  if (u[p.source[0]] < 0.0) p.sign[0] = -1.0;
  return p;
}

inline Alg1Setup make_alg1_setup(Method method, int K, double q, const ModelTensors& t, const Matrix& sigma,
                                 const Tensor3& chi3, const Tensor4& chi4) {
  if (K < 2) throw std::invalid_argument("coefficient estimation needs K >= 2");
  if (!(t.u.norm() > 0.0)) throw std::invalid_argument("gradient u is zero; the coverage expansion needs u != 0");
  const SignedPermutation p = normalizing_relabel(t.u);
  if (p.is_identity()) return Alg1Setup(method, K, q, t, sigma, chi3, chi4, p);
  ModelTensors pt{p.apply(t.u), p.apply(t.v), p.apply(t.w)};
  return Alg1Setup(method, K, q, pt, p.apply(sigma), p.apply(chi3), p.apply(chi4), p);
}

/// Scratch buffers reused across replications.
struct Alg1Workspace {
  Surrogates s;
  Vector x;
};

/// One draw of the unbiased error-term estimator; empty when the E2 guard rejects the draw.
inline std::optional<double> alg1_replication(const Alg1Setup& st, Rng& rng, Alg1Workspace& ws) {
  draw_surrogates_chol(st.chol, st.K, rng, ws.s);
  const Vector& A0 = ws.s.A0;
  const auto& B = ws.s.B;
  const auto& t = st.tensors;
  const int K = st.K;
  const double kk = std::sqrt(static_cast<double>(K) * (K - 1));

  double E2 = 0.0;
  for (const auto& b : B) {
    const double s = t.u.dot(b);
    E2 += s * s;
  }
  if (!(E2 >= st.e2_floor) || E2 == 0.0) return std::nullopt;
  const double sE = std::sqrt(E2);

  double er = 0.0;
  const double a = t.u.dot(A0);
  if (std::abs(kk * a / sE) <= st.q) {
    double sum1 = 0.0, sq1 = 0.0, sum2 = 0.0;
    for (int i = 0; i < K; ++i) {
      ws.x = A0 + B[i];
      const double p1 = st.edgeworth.p1(ws.x);
      sum1 += p1;
      sq1 += p1 * p1;
      sum2 += st.edgeworth.p2(ws.x);
    }
    er += 0.5 * (sum1 * sum1 - sq1) + sum2;
  }

  const ImplicitStep imp = implicit_step(st.method, A0, B, t, st.q, E2);
  double mu = 0.0;
  for (Eigen::Index i = 0; i < st.regression.size(); ++i) mu += st.regression[i] * A0[i + 1];
  for (int sgn : {+1, -1}) {
    const double F = sgn > 0 ? imp.F_plus : imp.F_minus;
    const double yx = sgn > 0 ? imp.y_x : imp.y_x_minus;
    const double yxx = sgn > 0 ? imp.y_xx : imp.y_xx_minus;
    const double z = F - mu;
    const double phi = normal_pdf(z, st.cond_var);
    double p1sum = 0.0;
    if (st.edgeworth.has_third()) {
      Vector A0s = A0;
      A0s[0] = F;
      for (int i = 0; i < K; ++i) {
        ws.x = A0s + B[i];
        p1sum += st.edgeworth.p1(ws.x);
      }
    }
    const double term = phi * (p1sum * yx + 0.5 * yxx + 0.5 * (-z / st.cond_var) * yx * yx);
    er += sgn * term;
  }
  return er;
}

inline std::optional<double> alg1_replication(const Alg1Setup& st, Rng& rng) {
  Alg1Workspace ws;
  return alg1_replication(st, rng, ws);
}

struct CoefficientEstimate {
  Method method = Method::batching;
  int K = 0;
  double q = 0.0;
  double c_hat = 0.0;
  double halfwidth95 = 0.0;
  std::uint64_t reps = 0;
  std::uint64_t rejected = 0;
  Algorithm algorithm = Algorithm::alg1;
  bool approximate_cumulants = false;
  std::vector<std::string> warnings;

  double standard_error() const { return halfwidth95 / 1.96; }
};

struct CoefficientOptions {
  std::uint64_t reps = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  double max_reject_fraction = 0.01;
};

namespace detail {
struct ErAccumulator {
  MomentAccumulator m;
  std::uint64_t rejected = 0;
  void merge(const ErAccumulator& o) {
    m.merge(o.m);
    rejected += o.rejected;
  }
};

inline CoefficientEstimate finish_estimate(const ErAccumulator& acc, const CoefficientOptions& opt) {
  if (static_cast<double>(acc.rejected) > opt.max_reject_fraction * static_cast<double>(opt.reps))
    throw NumericGuardError("coefficient estimation rejected " + std::to_string(acc.rejected) + " of " +
                            std::to_string(opt.reps) + " replications (E2 guard); geometry is near-degenerate");
  CoefficientEstimate e;
  e.reps = opt.reps;
  e.rejected = acc.rejected;
  e.c_hat = acc.m.mean();
  if (acc.m.count > 1) e.halfwidth95 = 1.96 * std::sqrt(acc.m.variance() / static_cast<double>(acc.m.count));
  return e;
}
}  // namespace detail

/// alg1 estimate with explicit tensors and cumulants.
inline CoefficientEstimate estimate_coefficient(const ModelTensors& t, const Matrix& sigma, const Tensor3& chi3,
                                                const Tensor4& chi4, int K, const CriticalValue& cv, Method method,
                                                const CoefficientOptions& opt) {
  if (opt.reps < 100) throw std::invalid_argument("coefficient estimation needs reps >= 100");
  const double q = cv.resolve(K);
  const Alg1Setup st = make_alg1_setup(method, K, q, t, sigma, chi3, chi4);
  auto body = [&](std::uint64_t b, std::uint64_t e) {
    detail::ErAccumulator acc;
    Alg1Workspace ws;
    for (std::uint64_t r = b; r < e; ++r) {
      auto rng = substream(opt.seed, r);
      const auto er = alg1_replication(st, rng, ws);
      if (er)
        acc.m.add(*er);
      else
        ++acc.rejected;
    }
    return acc;
  };
  const auto acc = reduce_chunked<detail::ErAccumulator>(opt.reps, opt.workers, body);
  CoefficientEstimate out = detail::finish_estimate(acc, opt);
  out.method = method;
  out.K = K;
  out.q = q;
  out.algorithm = Algorithm::alg1;
  if (K < 5) out.warnings.push_back("K < 5: unbiasedness is only guaranteed for K >= 5");
  if (!st.relabel.is_identity()) out.warnings.push_back("coordinates relabeled so that u_1 > 0");
  return out;
}

inline CoefficientEstimate estimate_coefficient(const ModelSpec& model, const DistributionSpec& dist, int K,
                                                const CriticalValue& cv, Method method,
                                                const CoefficientOptions& opt) {
  if (model.d != dist.d) throw std::invalid_argument("model and distribution dimensions differ");
  auto out = estimate_coefficient(ModelTensors::of(model), dist.sigma, dist.chi3, dist.chi4, K, cv, method, opt);
  out.approximate_cumulants = !dist.cumulants_exact;
  return out;
}

/// alg2 estimate (batching only) from a cumulant series.
inline CoefficientEstimate estimate_coefficient_alg2(const UnivariateCumulantSeries& series, int K,
                                                     const CriticalValue& cv, const CoefficientOptions& opt,
                                                     Method method = Method::batching) {
  if (method != Method::batching) throw std::invalid_argument("alg2 applies to batching only");
  if (opt.reps < 100) throw std::invalid_argument("coefficient estimation needs reps >= 100");
  if (K < 2) throw std::invalid_argument("coefficient estimation needs K >= 2");
  const double q = cv.resolve(K);
  const UnivariateExpansion ex(series);
  const double kk = std::sqrt(static_cast<double>(K) * (K - 1));
  auto body = [&](std::uint64_t b, std::uint64_t e) {
    detail::ErAccumulator acc;
    std::vector<double> z(K);
    std::normal_distribution<double> nd;
    for (std::uint64_t r = b; r < e; ++r) {
      auto rng = substream(opt.seed, r);
      nd.reset();
      double zbar = 0.0;
      for (int i = 0; i < K; ++i) {
        z[i] = nd(rng);
        zbar += z[i];
      }
      zbar /= K;
      double ss = 0.0;
      for (int i = 0; i < K; ++i) ss += (z[i] - zbar) * (z[i] - zbar);
      if (!(ss >= 1e-12 * K)) {
        ++acc.rejected;
        continue;
      }
      double er = 0.0;
      if (std::abs(kk * zbar / std::sqrt(ss)) <= q) {
        double s1 = 0.0, sq = 0.0, s2 = 0.0;
        for (int i = 0; i < K; ++i) {
          const double p1 = ex.p1(z[i]);
          s1 += p1;
          sq += p1 * p1;
          s2 += ex.p2(z[i]);
        }
        er = 0.5 * (s1 * s1 - sq) + s2;
      }
      acc.m.add(er);
    }
    return acc;
  };
  const auto acc = reduce_chunked<detail::ErAccumulator>(opt.reps, opt.workers, body);
  CoefficientEstimate out = detail::finish_estimate(acc, opt);
  out.method = Method::batching;
  out.K = K;
  out.q = q;
  out.algorithm = Algorithm::alg2;
  return out;
}

/// Cumulant series of sqrt(n)(f(mean) - psi)/sigma for Gaussian data, from Isserlis moment contractions.
inline UnivariateCumulantSeries gaussian_cumulant_series(const ModelTensors& t, const Matrix& sigma) {
  const double var = t.u.dot(sigma * t.u);
  if (!(var > 0.0)) throw std::invalid_argument("gaussian_cumulant_series: u' Sigma u must be positive");
  const double sd = std::sqrt(var);
  const Vector s = sigma * t.u;
  const Matrix vS = t.v * sigma;
  double w_s_sigma = 0.0;  // w_ijk s_i Sigma_jk
  const int d = t.dim();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) w_s_sigma += t.w(i, j, k) * s[i] * sigma(j, k);
  UnivariateCumulantSeries out;
  out.k12 = vS.trace() / sd;
  out.k22 = (2.0 * (vS * vS).trace() + 6.0 * w_s_sigma) / var;
  out.k31 = 6.0 * s.dot(t.v * s) / (var * sd);
  out.k41 = (48.0 * s.dot(t.v * sigma * t.v * s) + 24.0 * t.w.contract(s)) / (var * var);
  return out;
}

inline UnivariateCumulantSeries gaussian_cumulant_series(const ModelSpec& model, const DistributionSpec& dist) {
  if (!dist.chi3.is_zero() || !dist.chi4.is_zero())
    throw std::invalid_argument("gaussian_cumulant_series: distribution has non-zero higher cumulants");
  return gaussian_cumulant_series(ModelTensors::of(model), dist.sigma);
}

inline CoefficientEstimate estimate_coefficient_alg2(const ModelSpec& model, const DistributionSpec& dist, int K,
                                                     const CriticalValue& cv, const CoefficientOptions& opt) {
  return estimate_coefficient_alg2(gaussian_cumulant_series(model, dist), K, cv, opt);
}

/// nominal + c/n, clamped to [0, 1].
inline double theoretical_coverage(double nominal, double c_hat, double n) {
  if (!(n >= 1.0)) throw std::invalid_argument("theoretical_coverage: n must be >= 1");
  return std::clamp(nominal + c_hat / n, 0.0, 1.0);
}

}  // namespace batchcov

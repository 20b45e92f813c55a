#pragma once

#include "batchcov/tensor.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace batchcov {

// ---------------------------------------------------------------------------
// Polynomial targets and their derivative tensors
// ---------------------------------------------------------------------------

struct Monomial {
  std::vector<int> exps;
  double coef = 0.0;
};

class Polynomial {
 public:
  Polynomial() = default;
  Polynomial(int d, std::vector<Monomial> terms) : d_(d), terms_(std::move(terms)) {
    if (d_ < 1) throw std::invalid_argument("polynomial dimension must be positive");
    for (const auto& t : terms_) {
      if (static_cast<int>(t.exps.size()) != d_)
        throw std::invalid_argument("monomial exponent vector has length " + std::to_string(t.exps.size()) +
                                    ", expected " + std::to_string(d_));
      for (int e : t.exps)
        if (e < 0) throw std::invalid_argument("monomial exponents must be non-negative");
    }
  }

  int dim() const { return d_; }
  const std::vector<Monomial>& terms() const { return terms_; }

  /// Mixed partial derivative; `orders[i]` is the number of differentiations in coordinate i.
  double partial(const Vector& x, const std::vector<int>& orders) const {
    double total = 0.0;
    for (const auto& t : terms_) {
      double term = t.coef;
      for (int i = 0; i < d_ && term != 0.0; ++i) {
        const int e = t.exps[i];
        const int r = orders[i];
        if (r > e) {
          term = 0.0;
          break;
        }
        for (int k = 0; k < r; ++k) term *= (e - k);
        term *= int_pow(x[i], e - r);
      }
      total += term;
    }
    return total;
  }

  double operator()(const Vector& x) const {
    check_dim(x);
    return partial(x, std::vector<int>(d_, 0));
  }

  Vector gradient(const Vector& x) const {
    check_dim(x);
    Vector g(d_);
    std::vector<int> o(d_, 0);
    for (int i = 0; i < d_; ++i) {
      ++o[i];
      g[i] = partial(x, o);
      --o[i];
    }
    return g;
  }

  Matrix hessian(const Vector& x) const {
    check_dim(x);
    Matrix h(d_, d_);
    std::vector<int> o(d_, 0);
    for (int i = 0; i < d_; ++i)
      for (int j = i; j < d_; ++j) {
        ++o[i];
        ++o[j];
        h(i, j) = h(j, i) = partial(x, o);
        --o[i];
        --o[j];
      }
    return h;
  }

  Tensor3 third(const Vector& x) const {
    check_dim(x);
    Tensor3 t(d_);
    std::vector<int> o(d_, 0);
    for (int i = 0; i < d_; ++i)
      for (int j = i; j < d_; ++j)
        for (int k = j; k < d_; ++k) {
          ++o[i];
          ++o[j];
          ++o[k];
          const double val = partial(x, o);
          --o[i];
          --o[j];
          --o[k];
          t(i, j, k) = t(i, k, j) = t(j, i, k) = t(j, k, i) = t(k, i, j) = t(k, j, i) = val;
        }
    return t;
  }

 private:
  static double int_pow(double x, int p) {
    double r = 1.0;
    for (int k = 0; k < p; ++k) r *= x;
    return r;
  }
  void check_dim(const Vector& x) const {
    if (x.size() != d_)
      throw std::invalid_argument("point has dimension " + std::to_string(x.size()) + ", polynomial expects " +
                                  std::to_string(d_));
  }

  int d_ = 0;
  std::vector<Monomial> terms_;
};

/// Scalar map applied on top of a polynomial: f(x) = g(P(x)).
enum class Outer { identity, sin, cos, exp };

inline Outer parse_outer(const std::string& s) {
  if (s == "identity") return Outer::identity;
  if (s == "sin") return Outer::sin;
  if (s == "cos") return Outer::cos;
  if (s == "exp") return Outer::exp;
  throw std::invalid_argument("unknown outer function '" + s + "'");
}

/// g, g', g'', g''' at y.
inline std::array<double, 4> outer_derivatives(Outer g, double y) {
  switch (g) {
    case Outer::identity: return {y, 1.0, 0.0, 0.0};
    case Outer::sin: return {std::sin(y), std::cos(y), -std::sin(y), -std::cos(y)};
    case Outer::cos: return {std::cos(y), -std::sin(y), -std::cos(y), std::sin(y)};
    case Outer::exp: {
      const double e = std::exp(y);
      return {e, e, e, e};
    }
  }
  return {0.0, 0.0, 0.0, 0.0};
}

struct DerivativeTensors {
  Vector u;   // gradient
  Matrix v;   // Hessian / 2
  Tensor3 w;  // third derivative / 6
};

inline DerivativeTensors derivative_tensors(const Polynomial& p, const Vector& m, Outer g = Outer::identity) {
  if (m.size() != p.dim())
    throw std::invalid_argument("mean point has dimension " + std::to_string(m.size()) + ", polynomial expects " +
                                std::to_string(p.dim()));
  const int d = p.dim();
  const Vector P1 = p.gradient(m);
  const Matrix P2 = p.hessian(m);
  const Tensor3 P3 = p.third(m);
  const auto gd = outer_derivatives(g, p(m));

  DerivativeTensors out;
  out.u = gd[1] * P1;
  out.v = 0.5 * (gd[2] * P1 * P1.transpose() + gd[1] * P2);
  out.v = 0.5 * (out.v + out.v.transpose()).eval();
  out.w = Tensor3(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        out.w(i, j, k) = (gd[3] * P1[i] * P1[j] * P1[k] +
                          gd[2] * (P2(i, j) * P1[k] + P2(i, k) * P1[j] + P2(j, k) * P1[i]) + gd[1] * P3(i, j, k)) /
                         6.0;
  return out;
}

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

struct ModelSpec {
  int d = 0;
  std::function<double(const Vector&)> f;
  Vector mean_point;
  Vector u;
  Matrix v;
  Tensor3 w;
  double psi0 = 0.0;
  std::optional<Polynomial> polynomial;
  Outer outer = Outer::identity;

  double operator()(const Vector& x) const { return f(x); }

  bool is_affine() const { return v.isZero(0.0) && w.is_zero(); }

  static ModelSpec from_polynomial(Polynomial p, Vector mean, Outer g = Outer::identity) {
    ModelSpec m;
    m.d = p.dim();
    auto t = derivative_tensors(p, mean, g);
    m.u = std::move(t.u);
    m.v = std::move(t.v);
    m.w = std::move(t.w);
    m.mean_point = std::move(mean);
    m.outer = g;
    m.polynomial = p;
    m.f = [p, g](const Vector& x) { return outer_derivatives(g, p(x))[0]; };
    m.psi0 = m.f(m.mean_point);
    return m;
  }

  /// Opaque target with caller-supplied tensors at `mean`.
  static ModelSpec from_callback(std::function<double(const Vector&)> f, Vector mean, Vector u, Matrix v, Tensor3 w) {
    ModelSpec m;
    m.d = static_cast<int>(mean.size());
    if (m.d < 1) throw std::invalid_argument("model dimension must be positive");
    if (u.size() != m.d || v.rows() != m.d || v.cols() != m.d || w.dim() != m.d)
      throw std::invalid_argument("derivative tensors disagree with the mean-point dimension");
    if (!is_symmetric(v, 1e-12)) throw std::invalid_argument("v must be symmetric");
    if (!w.is_symmetric(1e-12)) throw std::invalid_argument("w must be symmetric");
    m.f = std::move(f);
    m.mean_point = std::move(mean);
    m.u = std::move(u);
    m.v = std::move(v);
    m.w = std::move(w);
    m.psi0 = m.f(m.mean_point);
    return m;
  }

  /// s*f + t
  ModelSpec scaled(double s, double t) const {
    ModelSpec m = *this;
    auto base = f;
    m.f = [base, s, t](const Vector& x) { return s * base(x) + t; };
    m.u = s * u;
    m.v = s * v;
    Tensor3 ws(d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) ws(i, j, k) = s * w(i, j, k);
    m.w = ws;
    m.psi0 = s * psi0 + t;
    m.polynomial.reset();
    return m;
  }
};

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

enum class DistKind { normal, exp_centered, chisq1_centered, custom };

inline DistKind parse_dist_kind(const std::string& s) {
  if (s == "normal") return DistKind::normal;
  if (s == "exp_centered") return DistKind::exp_centered;
  if (s == "chisq1_centered") return DistKind::chisq1_centered;
  if (s == "custom") return DistKind::custom;
  throw std::invalid_argument("unknown distribution kind '" + s + "'");
}

/// Scalar building blocks for independent-coordinate distributions.
enum class Marginal { normal, exp_centered, chisq1_centered };

inline Marginal parse_marginal(const std::string& s) {
  if (s == "normal") return Marginal::normal;
  if (s == "exp_centered") return Marginal::exp_centered;
  if (s == "chisq1_centered") return Marginal::chisq1_centered;
  throw std::invalid_argument("unknown marginal '" + s + "'");
}

/// (kappa2, kappa3, kappa4) of the standardized marginal.
inline std::array<double, 3> marginal_cumulants(Marginal m) {
  switch (m) {
    case Marginal::normal: return {1.0, 0.0, 0.0};
    case Marginal::exp_centered: return {1.0, 2.0, 6.0};
    case Marginal::chisq1_centered: return {1.0, 2.0 * std::sqrt(2.0), 12.0};
  }
  return {0.0, 0.0, 0.0};
}

using Rng = std::mt19937_64;

struct DistributionSpec {
  enum class Construction { independent, gaussian, normal_square, callback };

  int d = 0;
  DistKind kind = DistKind::normal;
  Vector mean;
  Matrix sigma;
  Tensor3 chi3;
  Tensor4 chi4;
  bool cumulants_exact = true;

  Construction construction = Construction::gaussian;
  std::vector<Marginal> marginals;  // independent construction
  Matrix chol;                      // gaussian construction
  std::function<Vector(Rng&)> callback;

  static DistributionSpec normal(Vector mean, Matrix cov) {
    DistributionSpec s;
    s.d = static_cast<int>(mean.size());
    s.kind = DistKind::normal;
    s.construction = Construction::gaussian;
    s.mean = std::move(mean);
    s.sigma = std::move(cov);
    s.chi3 = Tensor3(s.d);
    s.chi4 = Tensor4(s.d);
    s.validate();
    s.chol = Eigen::LLT<Matrix>(s.sigma).matrixL();
    return s;
  }
  static DistributionSpec standard_normal(int d) { return normal(Vector::Zero(d), Matrix::Identity(d, d)); }

  /// Independent zero-mean unit-variance coordinates.
  static DistributionSpec independent(std::vector<Marginal> marginals, DistKind kind = DistKind::custom) {
    DistributionSpec s;
    s.d = static_cast<int>(marginals.size());
    if (s.d < 1) throw std::invalid_argument("distribution needs at least one coordinate");
    s.kind = kind;
    s.construction = Construction::independent;
    s.mean = Vector::Zero(s.d);
    s.sigma = Matrix::Identity(s.d, s.d);
    s.chi3 = Tensor3(s.d);
    s.chi4 = Tensor4(s.d);
    for (int i = 0; i < s.d; ++i) {
      const auto k = marginal_cumulants(marginals[i]);
      s.chi3(i, i, i) = k[1];
      s.chi4(i, i, i, i) = k[2];
    }
    s.marginals = std::move(marginals);
    s.validate();
    return s;
  }

  /// (X, (X^2-1)/sqrt 2) with X standard normal.
  static DistributionSpec normal_square() {
    DistributionSpec s;
    s.d = 2;
    s.kind = DistKind::custom;
    s.construction = Construction::normal_square;
    s.mean = Vector::Zero(2);
    s.sigma = Matrix::Identity(2, 2);
    s.chi3 = Tensor3(2);
    s.chi4 = Tensor4(2);
    const double r2 = std::sqrt(2.0);
    s.chi3(0, 0, 1) = s.chi3(0, 1, 0) = s.chi3(1, 0, 0) = r2;
    s.chi3(1, 1, 1) = 2.0 * r2;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l) {
            const int ones = i + j + k + l;
            if (ones == 2) s.chi4(i, j, k, l) = 4.0;
            if (ones == 4) s.chi4(i, j, k, l) = 12.0;
          }
    s.validate();
    return s;
  }

  /// Arbitrary sampler with caller-supplied cumulants.
  static DistributionSpec from_sampler(std::function<Vector(Rng&)> sampler, Vector mean, Matrix sigma, Tensor3 chi3,
                                       Tensor4 chi4, bool exact) {
    DistributionSpec s;
    s.d = static_cast<int>(mean.size());
    s.kind = DistKind::custom;
    s.construction = Construction::callback;
    s.callback = std::move(sampler);
    s.mean = std::move(mean);
    s.sigma = std::move(sigma);
    s.chi3 = std::move(chi3);
    s.chi4 = std::move(chi4);
    s.cumulants_exact = exact;
    s.validate();
    return s;
  }

  /// Replace the declared cumulants (e.g. with analytic values from a config).
  void override_cumulants(Matrix new_sigma, Tensor3 new_chi3, Tensor4 new_chi4, bool exact) {
    sigma = std::move(new_sigma);
    chi3 = std::move(new_chi3);
    chi4 = std::move(new_chi4);
    cumulants_exact = exact;
    validate();
  }

  void validate() const {
    if (d < 1) throw std::invalid_argument("distribution dimension must be positive");
    if (mean.size() != d || sigma.rows() != d || sigma.cols() != d || chi3.dim() != d || chi4.dim() != d)
      throw std::invalid_argument("distribution cumulant shapes disagree with dimension " + std::to_string(d));
    if (!is_symmetric(sigma, 1e-12)) throw std::invalid_argument("covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
    if (es.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("covariance must be positive definite");
    if (!chi3.is_symmetric(1e-12)) throw std::invalid_argument("third cumulant tensor must be symmetric");
    if (!chi4.is_symmetric(1e-12)) throw std::invalid_argument("fourth cumulant tensor must be symmetric");
  }

  /// One observation.
  Vector sample(Rng& rng) const {
    std::normal_distribution<double> nd;
    Vector x(d);
    switch (construction) {
      case Construction::gaussian: {
        Vector z(d);
        for (int i = 0; i < d; ++i) z[i] = nd(rng);
        return mean + chol * z;
      }
      case Construction::independent:
        for (int i = 0; i < d; ++i) x[i] = draw_marginal(marginals[i], rng);
        return x;
      case Construction::normal_square: {
        const double z = nd(rng);
        x[0] = z;
        x[1] = (z * z - 1.0) / std::sqrt(2.0);
        return x;
      }
      case Construction::callback: return callback(rng);
    }
    return x;
  }

  bool has_exact_batch_mean() const { return construction != Construction::callback; }

  /// Mean of n observations, drawn from its exact sampling distribution when one is known.
  Vector sample_batch_mean(Rng& rng, int n) const {
    if (n < 1) throw std::invalid_argument("batch size must be >= 1");
    const double nn = n;
    std::normal_distribution<double> nd;
    Vector x(d);
    switch (construction) {
      case Construction::gaussian: {
        Vector z(d);
        for (int i = 0; i < d; ++i) z[i] = nd(rng);
        return mean + chol * z / std::sqrt(nn);
      }
      case Construction::independent:
        for (int i = 0; i < d; ++i) {
          switch (marginals[i]) {
            case Marginal::normal: x[i] = nd(rng) / std::sqrt(nn); break;
            case Marginal::exp_centered: x[i] = std::gamma_distribution<double>(nn, 1.0)(rng) / nn - 1.0; break;
            case Marginal::chisq1_centered:
              x[i] = (std::gamma_distribution<double>(0.5 * nn, 2.0)(rng) / nn - 1.0) / std::sqrt(2.0);
              break;
          }
        }
        return x;
      case Construction::normal_square: {
        // Sum S ~ N(0,n); sum of squares = S^2/n + chi2_{n-1}, independent of S.
        const double s = std::sqrt(nn) * nd(rng);
        double ss = s * s / nn;
        if (n > 1) ss += std::gamma_distribution<double>(0.5 * (nn - 1.0), 2.0)(rng);
        x[0] = s / nn;
        x[1] = (ss / nn - 1.0) / std::sqrt(2.0);
        return x;
      }
      case Construction::callback: {
        Vector acc = Vector::Zero(d);
        for (int k = 0; k < n; ++k) acc += callback(rng);
        return acc / nn;
      }
    }
    return x;
  }

 private:
  static double draw_marginal(Marginal m, Rng& rng) {
    switch (m) {
      case Marginal::normal: return std::normal_distribution<double>()(rng);
      case Marginal::exp_centered: return std::exponential_distribution<double>(1.0)(rng) - 1.0;
      case Marginal::chisq1_centered: {
        const double z = std::normal_distribution<double>()(rng);
        return (z * z - 1.0) / std::sqrt(2.0);
      }
    }
    return 0.0;
  }
};

// ---------------------------------------------------------------------------
// Sample cumulants
// ---------------------------------------------------------------------------

struct SampleCumulants {
  Vector mean;
  Matrix sigma;
  Tensor3 chi3;
  Tensor4 chi4;
};

inline std::size_t default_cumulant_floor(int d) { return 10 * static_cast<std::size_t>(d) * d * d * d; }

/// Unbiased k-statistics of orders 1..4. `min_samples` of 0 selects the 10 d^4 floor.
inline SampleCumulants cumulants_from_samples(const std::vector<Vector>& xs, std::size_t min_samples = 0) {
  if (xs.empty()) throw std::invalid_argument("cumulants_from_samples: no samples");
  const int d = static_cast<int>(xs.front().size());
  const std::size_t floor = min_samples ? min_samples : default_cumulant_floor(d);
  if (xs.size() < std::max<std::size_t>(floor, 4))
    throw std::invalid_argument("cumulants_from_samples: need at least " + std::to_string(std::max<std::size_t>(floor, 4)) +
                                " samples, got " + std::to_string(xs.size()));
  const double N = static_cast<double>(xs.size());

  Vector mean = Vector::Zero(d);
  for (const auto& x : xs) {
    if (x.size() != d) throw std::invalid_argument("cumulants_from_samples: ragged sample dimensions");
    mean += x;
  }
  mean /= N;

  // Central moment sums over sorted index tuples only; permutations are filled afterwards.
  Matrix s2 = Matrix::Zero(d, d);
  Tensor3 s3(d);
  Tensor4 s4(d);
  Vector c(d);
  for (const auto& x : xs) {
    c = x - mean;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        const double cij = c[i] * c[j];
        s2(i, j) += cij;
        for (int k = j; k < d; ++k) {
          const double cijk = cij * c[k];
          s3(i, j, k) += cijk;
          for (int l = k; l < d; ++l) s4(i, j, k, l) += cijk * c[l];
        }
      }
  }

  SampleCumulants out;
  out.mean = mean;
  out.sigma = Matrix::Zero(d, d);
  out.chi3 = Tensor3(d);
  out.chi4 = Tensor4(d);
  auto m2 = [&](int a, int b) { return s2(std::min(a, b), std::max(a, b)) / N; };
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) out.sigma(i, j) = out.sigma(j, i) = s2(i, j) / (N - 1.0);

  const double c3 = N / ((N - 1.0) * (N - 2.0));
  const double c4 = N * N / ((N - 1.0) * (N - 2.0) * (N - 3.0));
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j)
      for (int k = j; k < d; ++k) {
        const double k3 = c3 * s3(i, j, k);
        std::array<int, 3> idx{i, j, k};
        do {
          out.chi3(idx[0], idx[1], idx[2]) = k3;
        } while (std::next_permutation(idx.begin(), idx.end()));
        for (int l = k; l < d; ++l) {
          const double m4 = s4(i, j, k, l) / N;
          const double pairs = m2(i, j) * m2(k, l) + m2(i, k) * m2(j, l) + m2(i, l) * m2(j, k);
          const double k4 = c4 * ((N + 1.0) * m4 - (N - 1.0) * pairs);
          std::array<int, 4> id4{i, j, k, l};
          do {
            out.chi4(id4[0], id4[1], id4[2], id4[3]) = k4;
          } while (std::next_permutation(id4.begin(), id4.end()));
        }
      }

  Eigen::SelfAdjointEigenSolver<Matrix> es(out.sigma);
  const double top = es.eigenvalues().maxCoeff();
  if (!(es.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1e-300)))
    throw std::invalid_argument("cumulants_from_samples: empirical covariance is singular");
  return out;
}

// ---------------------------------------------------------------------------
// Batch layout
// ---------------------------------------------------------------------------

struct BatchLayout {
  int K = 2;
  int n = 1;
  int gap = 0;

  void validate() const {
    if (K < 2) throw std::invalid_argument("batch layout needs K >= 2, got " + std::to_string(K));
    if (n < 1) throw std::invalid_argument("batch layout needs n >= 1, got " + std::to_string(n));
    if (gap < 0) throw std::invalid_argument("batch layout needs gap >= 0, got " + std::to_string(gap));
  }
};

}  // namespace batchcov

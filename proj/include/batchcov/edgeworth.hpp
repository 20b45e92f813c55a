#pragma once

#include "batchcov/t_dist.hpp"
#include "batchcov/tensor.hpp"

#include <Eigen/LU>

#include <stdexcept>
#include <string>

namespace batchcov {

/// Probabilists' Hermite polynomial He_k, 0 <= k <= 6.
inline double hermite(int k, double x) {
  if (k < 0 || k > 6) throw std::invalid_argument("hermite: order must be in 0..6, got " + std::to_string(k));
  double prev = 1.0;
  if (k == 0) return prev;
  double cur = x;
  for (int j = 1; j < k; ++j) {
    const double next = x * cur - j * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Edgeworth correction polynomials for a mean with covariance sigma and cumulants chi3, chi4.
/// The normal density factor is not included and the leading 1 is dropped.
class EdgeworthContext {
 public:
  EdgeworthContext(const Matrix& sigma, const Tensor3& chi3, const Tensor4& chi4)
      : d_(static_cast<int>(sigma.rows())),
        chi3_(chi3.is_symmetric() ? chi3 : chi3.symmetrized()),
        chi4_(chi4.is_symmetric() ? chi4 : chi4.symmetrized()) {
    if (sigma.rows() != sigma.cols() || chi3.dim() != d_ || chi4.dim() != d_)
      throw std::invalid_argument("EdgeworthContext: inconsistent dimensions");
    Eigen::FullPivLU<Matrix> lu(sigma);
    if (!lu.isInvertible()) throw std::invalid_argument("EdgeworthContext: covariance is singular");
    sinv_ = lu.inverse();
    sinv_ = 0.5 * (sinv_ + sinv_.transpose());
    has3_ = !chi3_.is_zero();
    has4_ = !chi4_.is_zero();

    c_ = chi3_.trace_with(sinv_);
    D_ = chi4_.trace_with(sinv_);
    e4_ = (D_.array() * sinv_.array()).sum();
    sinv_c_ = sinv_ * c_;
    cSc_ = c_.dot(sinv_c_);

    // M_il = chi_ijk s^{jm} s^{kn} chi_lmn
    M_ = Matrix::Zero(d_, d_);
    if (has3_) {
      Tensor3 raised(d_);  // chi_imn raised on its last two indices
      for (int i = 0; i < d_; ++i)
        for (int j = 0; j < d_; ++j)
          for (int k = 0; k < d_; ++k) {
            double s = 0.0;
            for (int m = 0; m < d_; ++m)
              for (int n = 0; n < d_; ++n) s += chi3_(i, m, n) * sinv_(m, j) * sinv_(n, k);
            raised(i, j, k) = s;
          }
      for (int i = 0; i < d_; ++i)
        for (int l = 0; l < d_; ++l) {
          double s = 0.0;
          for (int j = 0; j < d_; ++j)
            for (int k = 0; k < d_; ++k) s += raised(i, j, k) * chi3_(l, j, k);
          M_(i, l) = s;
        }
    }
    e33_ = (sinv_.array() * M_.array()).sum();
  }

  int dim() const { return d_; }
  const Matrix& sigma_inv() const { return sinv_; }
  bool has_third() const { return has3_; }
  bool has_fourth() const { return has4_; }

  double p1(const Vector& x) const {
    if (!has3_) return 0.0;
    const Vector h = sinv_ * x;
    return chi3_.contract(h) / 6.0 - 0.5 * c_.dot(h);
  }

  double p2(const Vector& x) const {
    const Vector h = sinv_ * x;
    double out = 0.0;
    if (has4_) out += (chi4_.contract(h) - 6.0 * h.dot(D_ * h) + 3.0 * e4_) / 24.0;
    if (has3_) {
      const double t3 = chi3_.contract(h);
      const double ch = c_.dot(h);
      const Vector G = chi3_.contract2(h, h);
      const double s = t3 * t3 - 6.0 * t3 * ch - 9.0 * G.dot(sinv_ * G) + 9.0 * ch * ch + 18.0 * G.dot(sinv_c_) +
                       18.0 * h.dot(M_ * h) - 9.0 * cSc_ - 6.0 * e33_;
      out += s / 72.0;
    }
    return out;
  }

 private:
  int d_;
  Tensor3 chi3_;
  Tensor4 chi4_;
  Matrix sinv_;
  bool has3_ = false;
  bool has4_ = false;
  Vector c_;
  Matrix D_;
  double e4_ = 0.0;
  Vector sinv_c_;
  double cSc_ = 0.0;
  Matrix M_;
  double e33_ = 0.0;
};

inline double p1_poly(const Vector& x, const EdgeworthContext& ctx) { return ctx.p1(x); }
inline double p2_poly(const Vector& x, const EdgeworthContext& ctx) { return ctx.p2(x); }

/// Expansion coefficients of the first four cumulants of a standardized statistic:
/// k1 = k12/sqrt(n), k2 = 1 + k22/n, k3 = k31/sqrt(n), k4 = k41/n.
struct UnivariateCumulantSeries {
  double k12 = 0.0;
  double k22 = 0.0;
  double k31 = 0.0;
  double k41 = 0.0;
};

/// Correction functions for the distribution (h) and density (p) of the standardized statistic.
class UnivariateExpansion {
 public:
  explicit UnivariateExpansion(const UnivariateCumulantSeries& s) : s_(s) {
    a_ = 0.5 * (s.k22 + s.k12 * s.k12);
    b_ = (s.k41 + 4.0 * s.k12 * s.k31) / 24.0;
    c_ = s.k31 * s.k31 / 72.0;
  }

  double h1(double x) const { return -(s_.k12 + s_.k31 / 6.0 * (x * x - 1.0)) * normal_pdf(x); }
  double h2(double x) const {
    const double x2 = x * x;
    return -x * (a_ + b_ * (x2 - 3.0) + c_ * (x2 * x2 - 10.0 * x2 + 15.0)) * normal_pdf(x);
  }
  // h_r = -(sum of He_{j-1} terms) phi, so h_r' / phi raises each Hermite order by one.
  double p1(double x) const { return s_.k12 * hermite(1, x) + s_.k31 / 6.0 * hermite(3, x); }
  double p2(double x) const { return a_ * hermite(2, x) + b_ * hermite(4, x) + c_ * hermite(6, x); }

  const UnivariateCumulantSeries& series() const { return s_; }

 private:
  UnivariateCumulantSeries s_;
  double a_ = 0.0;
  double b_ = 0.0;
  double c_ = 0.0;
};

inline UnivariateExpansion alg2_h_and_p(const UnivariateCumulantSeries& s) { return UnivariateExpansion(s); }

}  // namespace batchcov

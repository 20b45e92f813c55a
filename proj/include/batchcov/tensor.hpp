#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace batchcov {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense rank-3 tensor over a d-dimensional index space.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int d) : d_(d), data_(static_cast<std::size_t>(d) * d * d, 0.0) {}

  int dim() const { return d_; }
  double& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
  double operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }
  std::span<const double> flat() const { return data_; }

  bool is_zero() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return x == 0.0; });
  }

  bool is_symmetric(double tol = 0.0) const {
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        for (int k = 0; k < d_; ++k) {
          const double x = (*this)(i, j, k);
          if (std::abs(x - (*this)(j, i, k)) > tol || std::abs(x - (*this)(i, k, j)) > tol) return false;
        }
    return true;
  }

  Tensor3 symmetrized() const {
    Tensor3 out(d_);
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        for (int k = 0; k < d_; ++k) {
          std::array<int, 3> s{i, j, k};
          std::sort(s.begin(), s.end());  // same summation order for every permutation
          const auto& t = *this;
          const int a = s[0], b = s[1], c = s[2];
          out(i, j, k) = (t(a, b, c) + t(a, c, b) + t(b, a, c) + t(b, c, a) + t(c, a, b) + t(c, b, a)) / 6.0;
        }
    return out;
  }

  /// w_{ijk} x_i y_j z_k
  double contract(const Vector& x, const Vector& y, const Vector& z) const {
    double s = 0.0;
    for (int i = 0; i < d_; ++i) {
      if (x[i] == 0.0) continue;
      for (int j = 0; j < d_; ++j) {
        if (y[j] == 0.0) continue;
        const double xy = x[i] * y[j];
        const double* row = &data_[index(i, j, 0)];
        for (int k = 0; k < d_; ++k) s += xy * row[k] * z[k];
      }
    }
    return s;
  }
  double contract(const Vector& x) const { return contract(x, x, x); }

  /// Returns the vector g_k = t_{ijk} x_i y_j.
  Vector contract2(const Vector& x, const Vector& y) const {
    Vector out = Vector::Zero(d_);
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) {
        const double xy = x[i] * y[j];
        if (xy == 0.0) continue;
        for (int k = 0; k < d_; ++k) out[k] += xy * (*this)(i, j, k);
      }
    return out;
  }

  /// Returns c_k = t_{ijk} m_{ij}.
  Vector trace_with(const Matrix& m) const {
    Vector out = Vector::Zero(d_);
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        for (int k = 0; k < d_; ++k) out[k] += m(i, j) * (*this)(i, j, k);
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * d_ + j) * d_ + k;
  }
  int d_ = 0;
  std::vector<double> data_;
};

/// Dense rank-4 tensor over a d-dimensional index space.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(int d) : d_(d), data_(static_cast<std::size_t>(d) * d * d * d, 0.0) {}

  int dim() const { return d_; }
  double& operator()(int i, int j, int k, int l) { return data_[index(i, j, k, l)]; }
  double operator()(int i, int j, int k, int l) const { return data_[index(i, j, k, l)]; }

  bool is_zero() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return x == 0.0; });
  }

  bool is_symmetric(double tol = 0.0) const {
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        for (int k = 0; k < d_; ++k)
          for (int l = 0; l < d_; ++l) {
            const double x = (*this)(i, j, k, l);
            if (std::abs(x - (*this)(j, i, k, l)) > tol || std::abs(x - (*this)(i, k, j, l)) > tol ||
                std::abs(x - (*this)(i, j, l, k)) > tol)
              return false;
          }
    return true;
  }

  Tensor4 symmetrized() const {
    Tensor4 out(d_);
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        for (int k = 0; k < d_; ++k)
          for (int l = 0; l < d_; ++l) {
            std::array<int, 4> idx{i, j, k, l};
            std::sort(idx.begin(), idx.end());
            double s = 0.0;
            int count = 0;
            do {
              s += (*this)(idx[0], idx[1], idx[2], idx[3]);
              ++count;
            } while (std::next_permutation(idx.begin(), idx.end()));
            // Distinct permutations of a multiset all carry the same weight in the full 24-term average.
            out(i, j, k, l) = s / count;
          }
    return out;
  }

  /// t_{ijkl} a_i b_j c_k e_l
  double contract(const Vector& a, const Vector& b, const Vector& c, const Vector& e) const {
    double s = 0.0;
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) {
        const double ab = a[i] * b[j];
        if (ab == 0.0) continue;
        for (int k = 0; k < d_; ++k) {
          const double abc = ab * c[k];
          if (abc == 0.0) continue;
          const double* row = &data_[index(i, j, k, 0)];
          for (int l = 0; l < d_; ++l) s += abc * row[l] * e[l];
        }
      }
    return s;
  }
  double contract(const Vector& x) const { return contract(x, x, x, x); }

  /// Returns D_{ij} = t_{ijkl} m_{kl}.
  Matrix trace_with(const Matrix& m) const {
    Matrix out = Matrix::Zero(d_, d_);
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j)
        for (int k = 0; k < d_; ++k)
          for (int l = 0; l < d_; ++l) out(i, j) += (*this)(i, j, k, l) * m(k, l);
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  std::size_t index(int i, int j, int k, int l) const {
    return ((static_cast<std::size_t>(i) * d_ + j) * d_ + k) * d_ + l;
  }
  int d_ = 0;
  std::vector<double> data_;
};

inline bool is_symmetric(const Matrix& m, double tol = 0.0) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

/// A relabeling x -> (sign_k * x_{perm_k})_k of coordinates. Applied to tensors it is exact.
struct SignedPermutation {
  std::vector<int> source;   // new coordinate k reads old coordinate source[k]
  std::vector<double> sign;  // +1 or -1

  static SignedPermutation identity(int d) {
    SignedPermutation p;
    p.source.resize(d);
    std::iota(p.source.begin(), p.source.end(), 0);
    p.sign.assign(d, 1.0);
    return p;
  }

  bool is_identity() const {
    for (std::size_t k = 0; k < source.size(); ++k)
      if (source[k] != static_cast<int>(k) || sign[k] != 1.0) return false;
    return true;
  }

  Vector apply(const Vector& x) const {
    Vector out(x.size());
    for (std::size_t k = 0; k < source.size(); ++k) out[k] = sign[k] * x[source[k]];
    return out;
  }
  Matrix apply(const Matrix& m) const {
    const int d = static_cast<int>(source.size());
    Matrix out(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out(i, j) = sign[i] * sign[j] * m(source[i], source[j]);
    return out;
  }
  Tensor3 apply(const Tensor3& t) const {
    const int d = static_cast<int>(source.size());
    Tensor3 out(d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          out(i, j, k) = sign[i] * sign[j] * sign[k] * t(source[i], source[j], source[k]);
    return out;
  }
  Tensor4 apply(const Tensor4& t) const {
    const int d = static_cast<int>(source.size());
    Tensor4 out(d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l)
            out(i, j, k, l) =
                sign[i] * sign[j] * sign[k] * sign[l] * t(source[i], source[j], source[k], source[l]);
    return out;
  }
};

}  // namespace batchcov

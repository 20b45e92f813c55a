#pragma once

#include "batchcov/model.hpp"
#include "batchcov/parallel.hpp"
#include "batchcov/t_dist.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace batchcov {

enum class Method { batching, sectioning, sb, sj };
inline constexpr std::array<Method, 4> kAllMethods{Method::batching, Method::sectioning, Method::sb, Method::sj};

inline std::string method_name(Method m) {
  switch (m) {
    case Method::batching: return "batching";
    case Method::sectioning: return "sectioning";
    case Method::sb: return "sb";
    case Method::sj: return "sj";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "batching" || s == "B") return Method::batching;
  if (s == "sectioning" || s == "S") return Method::sectioning;
  if (s == "sb" || s == "SB") return Method::sb;
  if (s == "sj" || s == "SJ") return Method::sj;
  throw std::invalid_argument("unknown method '" + s + "'");
}

enum class Sided { two_sided_symmetric, lower_one_sided, upper_one_sided };

inline Sided parse_sided(const std::string& s) {
  if (s == "two_sided" || s == "two_sided_symmetric") return Sided::two_sided_symmetric;
  if (s == "lower_one_sided") return Sided::lower_one_sided;
  if (s == "upper_one_sided") return Sided::upper_one_sided;
  throw std::invalid_argument("unknown sidedness '" + s + "'");
}

/// t critical value for K batches at level alpha.
inline double critical_value(int K, double alpha, Sided sided) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  return sided == Sided::two_sided_symmetric ? t_quantile(K - 1, 0.5 * alpha) : t_quantile(K - 1, alpha);
}

struct IntervalResult {
  Method method = Method::batching;
  double center = 0.0;
  double half_width = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  Sided sided = Sided::two_sided_symmetric;
  bool degenerate = false;
  double scale = 0.0;     // S_batch, S_sec or S_SJ
  double critical = 0.0;  // t quantile used

  bool covers(double psi0) const {
    if (degenerate) return center == psi0;
    return lower <= psi0 && psi0 <= upper;
  }
};

struct StatisticValue {
  Method method = Method::batching;
  double value = 0.0;
  double psi0_used = 0.0;
  bool degenerate = false;
};

/// f evaluated on the batch means, the pooled mean, and (lazily) the leave-one-batch-out means.
class BatchEvaluation {
 public:
  BatchEvaluation(const ModelSpec& model, const std::vector<Vector>& means, const Vector& pooled)
      : model_(&model), means_(&means), pooled_(pooled) {
    K_ = static_cast<int>(means.size());
    if (K_ < 2) throw std::invalid_argument("batching needs K >= 2, got " + std::to_string(K_));
    psi_.resize(K_);
    for (int i = 0; i < K_; ++i) psi_[i] = model(means[i]);
    psi_pooled_ = model(pooled_);
  }

  int K() const { return K_; }
  const std::vector<double>& psi() const { return psi_; }
  double psi_pooled() const { return psi_pooled_; }

  /// Pseudo-values K psi(P) - (K-1) psi(P_(i)).
  const std::vector<double>& jackknife() const {
    if (jack_.empty()) {
      jack_.resize(K_);
      const double K = K_;
      Vector loo(pooled_.size());
      for (int i = 0; i < K_; ++i) {
        loo = (K * pooled_ - (*means_)[i]) / (K - 1.0);
        jack_[i] = K * psi_pooled_ - (K - 1.0) * (*model_)(loo);
      }
    }
    return jack_;
  }

  /// Center and scale of the method's pivot.
  std::pair<double, double> center_scale(Method m) const {
    switch (m) {
      case Method::batching: return {mean_of(psi_), sd_about(psi_, mean_of(psi_))};
      case Method::sectioning: return {psi_pooled_, sd_about(psi_, psi_pooled_)};
      case Method::sb: return {psi_pooled_, sd_about(psi_, mean_of(psi_))};
      case Method::sj: {
        const auto& j = jackknife();
        const double c = mean_of(j);
        return {c, sd_about(j, c)};
      }
    }
    return {0.0, 0.0};
  }

  /// Zero spread relative to the magnitude of the values.
  bool degenerate_scale(Method m, double scale) const {
    const std::vector<double>& vals = (m == Method::sj) ? jackknife() : psi_;
    double mag = 0.0;
    for (double x : vals) mag = std::max(mag, std::abs(x));
    return !(scale > 64.0 * std::numeric_limits<double>::epsilon() * mag) || scale == 0.0;
  }

 private:
  static double mean_of(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
  }
  static double sd_about(const std::vector<double>& x, double c) {
    double s = 0.0;
    for (double v : x) s += (v - c) * (v - c);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
  }

  const ModelSpec* model_;
  const std::vector<Vector>* means_;
  Vector pooled_;
  int K_ = 0;
  std::vector<double> psi_;
  double psi_pooled_ = 0.0;
  mutable std::vector<double> jack_;
};

inline IntervalResult interval_from_evaluation(const BatchEvaluation& ev, Method method, double alpha, Sided sided) {
  const auto [center, scale] = ev.center_scale(method);
  IntervalResult r;
  r.method = method;
  r.sided = sided;
  r.center = center;
  r.scale = scale;
  r.critical = critical_value(ev.K(), alpha, sided);
  r.degenerate = ev.degenerate_scale(method, scale);
  r.half_width = r.degenerate ? 0.0 : r.critical * scale / std::sqrt(static_cast<double>(ev.K()));
  const double inf = std::numeric_limits<double>::infinity();
  switch (sided) {
    case Sided::two_sided_symmetric:
      r.lower = center - r.half_width;
      r.upper = center + r.half_width;
      break;
    case Sided::lower_one_sided:
      r.lower = -inf;
      r.upper = center + r.half_width;
      break;
    case Sided::upper_one_sided:
      r.lower = center - r.half_width;
      r.upper = inf;
      break;
  }
  if (r.degenerate && sided == Sided::two_sided_symmetric) r.lower = r.upper = center;
  return r;
}

inline StatisticValue statistic_from_evaluation(const BatchEvaluation& ev, Method method, double psi0) {
  const auto [center, scale] = ev.center_scale(method);
  StatisticValue s;
  s.method = method;
  s.psi0_used = psi0;
  s.degenerate = ev.degenerate_scale(method, scale);
  const double diff = center - psi0;
  if (s.degenerate)
    s.value = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  else
    s.value = std::sqrt(static_cast<double>(ev.K())) * diff / scale;
  return s;
}

// ---------------------------------------------------------------------------
// Raw-data entry points
// ---------------------------------------------------------------------------

inline std::vector<Vector> as_points(const std::vector<double>& xs) {
  std::vector<Vector> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(Vector::Constant(1, x));
  return out;
}

/// Batch means and the pooled mean of contiguous batches.
inline std::pair<std::vector<Vector>, Vector> batch_means(const std::vector<Vector>& data, const BatchLayout& layout) {
  layout.validate();
  const std::size_t need = static_cast<std::size_t>(layout.K) * layout.n;
  if (data.size() != need)
    throw std::invalid_argument("data length " + std::to_string(data.size()) + " does not equal K*n = " +
                                std::to_string(need));
  const Eigen::Index d = data.front().size();
  std::vector<Vector> means(layout.K, Vector::Zero(d));
  Vector pooled = Vector::Zero(d);
  for (int i = 0; i < layout.K; ++i) {
    for (int j = 0; j < layout.n; ++j) {
      const auto& x = data[static_cast<std::size_t>(i) * layout.n + j];
      if (x.size() != d) throw std::invalid_argument("data points have inconsistent dimension");
      means[i] += x;
      pooled += x;
    }
    means[i] /= static_cast<double>(layout.n);
  }
  pooled /= static_cast<double>(need);
  return {std::move(means), std::move(pooled)};
}

inline std::vector<double> batch_estimates(const std::vector<Vector>& data, const BatchLayout& layout,
                                           const ModelSpec& model) {
  const auto [means, pooled] = batch_means(data, layout);
  std::vector<double> out(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) out[i] = model(means[i]);
  return out;
}

inline IntervalResult confidence_interval(const std::vector<Vector>& data, const BatchLayout& layout,
                                          const ModelSpec& model, Method method, double alpha,
                                          Sided sided = Sided::two_sided_symmetric) {
  const auto [means, pooled] = batch_means(data, layout);
  return interval_from_evaluation(BatchEvaluation(model, means, pooled), method, alpha, sided);
}

inline StatisticValue statistic(const std::vector<Vector>& data, const BatchLayout& layout, const ModelSpec& model,
                                Method method, double psi0) {
  const auto [means, pooled] = batch_means(data, layout);
  return statistic_from_evaluation(BatchEvaluation(model, means, pooled), method, psi0);
}

/// Batching pivot computed directly from K batch estimates.
inline double batching_statistic(const std::vector<double>& estimates, double psi0) {
  const double K = static_cast<double>(estimates.size());
  if (estimates.size() < 2) throw std::invalid_argument("batching needs K >= 2");
  double m = 0.0;
  for (double x : estimates) m += x;
  m /= K;
  double s = 0.0;
  for (double x : estimates) s += (x - m) * (x - m);
  return std::sqrt(K) * (m - psi0) / std::sqrt(s / (K - 1.0));
}

// ---------------------------------------------------------------------------
// Coverage harness
// ---------------------------------------------------------------------------

struct CoverageReport {
  Method method = Method::batching;
  double coverage = 0.0;
  double halfwidth = 0.0;
  std::uint64_t reps = 0;
  std::uint64_t covered = 0;
  std::uint64_t degenerate = 0;

  /// Standard error of the coverage estimate.
  double standard_error() const {
    return reps ? std::sqrt(coverage * (1.0 - coverage) / static_cast<double>(reps)) : 0.0;
  }
};

inline CoverageReport make_report(Method m, std::uint64_t covered, std::uint64_t degenerate, std::uint64_t reps) {
  CoverageReport r;
  r.method = m;
  r.reps = reps;
  r.covered = covered;
  r.degenerate = degenerate;
  r.coverage = reps ? static_cast<double>(covered) / static_cast<double>(reps) : 0.0;
  r.halfwidth = 1.96 * r.standard_error();
  return r;
}

struct CoverageOptions {
  Sided sided = Sided::two_sided_symmetric;
  std::uint64_t reps = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  bool exact_batch_means = true;  // draw batch means directly when the distribution allows it
};

namespace detail {
struct CoverageCounts {
  std::vector<std::uint64_t> covered;
  std::vector<std::uint64_t> degenerate;
  void merge(const CoverageCounts& o) {
    if (covered.empty()) {
      covered = o.covered;
      degenerate = o.degenerate;
      return;
    }
    for (std::size_t i = 0; i < covered.size(); ++i) {
      covered[i] += o.covered[i];
      degenerate[i] += o.degenerate[i];
    }
  }
};
}  // namespace detail

/// Generic coverage loop: `draw(rng, means, pooled)` fills one replication's batch means.
template <class Draw>
std::vector<CoverageReport> coverage_loop(const ModelSpec& model, const std::vector<Method>& methods, int K,
                                          double alpha, double psi0, const CoverageOptions& opt, Draw draw) {
  if (opt.reps < 1) throw std::invalid_argument("coverage needs reps >= 1");
  const double crit = critical_value(K, alpha, opt.sided);
  const std::size_t nm = methods.size();
  auto body = [&](std::uint64_t b, std::uint64_t e) {
    detail::CoverageCounts acc;
    acc.covered.assign(nm, 0);
    acc.degenerate.assign(nm, 0);
    std::vector<Vector> means;
    Vector pooled;
    for (std::uint64_t r = b; r < e; ++r) {
      auto rng = substream(opt.seed, r);
      draw(rng, means, pooled);
      BatchEvaluation ev(model, means, pooled);
      for (std::size_t m = 0; m < nm; ++m) {
        const auto [center, scale] = ev.center_scale(methods[m]);
        if (ev.degenerate_scale(methods[m], scale)) {
          ++acc.degenerate[m];
          if (center == psi0) ++acc.covered[m];
          continue;
        }
        const double hw = crit * scale / std::sqrt(static_cast<double>(K));
        bool ok = false;
        switch (opt.sided) {
          case Sided::two_sided_symmetric: ok = center - hw <= psi0 && psi0 <= center + hw; break;
          case Sided::lower_one_sided: ok = psi0 <= center + hw; break;
          case Sided::upper_one_sided: ok = center - hw <= psi0; break;
        }
        if (ok) ++acc.covered[m];
      }
    }
    return acc;
  };
  const auto total = reduce_chunked<detail::CoverageCounts>(opt.reps, opt.workers, body);
  std::vector<CoverageReport> out;
  for (std::size_t m = 0; m < nm; ++m)
    out.push_back(make_report(methods[m], total.covered[m], total.degenerate[m], opt.reps));
  return out;
}

/// Fraction of replications whose interval covers psi0, for each requested method on shared data.
inline std::vector<CoverageReport> empirical_coverage(const DistributionSpec& dist, const ModelSpec& model,
                                                      const BatchLayout& layout, const std::vector<Method>& methods,
                                                      double alpha, const CoverageOptions& opt) {
  layout.validate();
  if (dist.d != model.d) throw std::invalid_argument("distribution and model dimensions differ");
  const bool exact = opt.exact_batch_means && dist.has_exact_batch_mean();
  const int K = layout.K;
  const int n = layout.n;
  auto draw = [&](Rng& rng, std::vector<Vector>& means, Vector& pooled) {
    means.resize(K);
    pooled = Vector::Zero(dist.d);
    for (int i = 0; i < K; ++i) {
      if (exact) {
        means[i] = dist.sample_batch_mean(rng, n);
      } else {
        Vector acc = Vector::Zero(dist.d);
        for (int j = 0; j < n; ++j) acc += dist.sample(rng);
        means[i] = acc / static_cast<double>(n);
      }
      pooled += means[i];
    }
    pooled /= static_cast<double>(K);
  };
  return coverage_loop(model, methods, K, alpha, model.psi0, opt, draw);
}

inline CoverageReport empirical_coverage(const DistributionSpec& dist, const ModelSpec& model,
                                         const BatchLayout& layout, Method method, double alpha,
                                         const CoverageOptions& opt) {
  return empirical_coverage(dist, model, layout, std::vector<Method>{method}, alpha, opt).front();
}

}  // namespace batchcov

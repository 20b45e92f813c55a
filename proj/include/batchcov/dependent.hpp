#pragma once

#include "batchcov/model.hpp"
#include "batchcov/parallel.hpp"
#include "batchcov/stats_core.hpp"

#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace batchcov {

enum class ChainKind { finite_markov, mm1_waiting, ar1 };

inline ChainKind parse_chain_kind(const std::string& s) {
  if (s == "finite_markov") return ChainKind::finite_markov;
  if (s == "mm1_waiting") return ChainKind::mm1_waiting;
  if (s == "ar1") return ChainKind::ar1;
  throw std::invalid_argument("unknown chain kind '" + s + "'");
}

/// Stationary distribution of a row-stochastic matrix.
inline Vector stationary_distribution(const Matrix& P) {
  const Eigen::Index m = P.rows();
  Matrix A(m + 1, m);
  A.topRows(m) = P.transpose() - Matrix::Identity(m, m);
  A.row(m).setOnes();
  Vector b = Vector::Zero(m + 1);
  b[m] = 1.0;
  Vector pi = A.colPivHouseholderQr().solve(b);
  for (Eigen::Index i = 0; i < m; ++i) pi[i] = std::max(0.0, pi[i]);
  return pi / pi.sum();
}

struct ChainSpec {
  ChainKind kind = ChainKind::finite_markov;

  // finite_markov
  Matrix transition;
  Vector g_values;            // g(state)
  std::optional<int> atom;    // recurrent state

  // mm1_waiting
  double arrival_rate = 0.5;
  double service_rate = 1.0;
  int burn_in = 1000;

  // ar1
  double phi = 0.5;
  double noise_sd = 1.0;
  double ar_mean = 0.0;

  std::optional<double> stationary_target;

  void validate() const {
    switch (kind) {
      case ChainKind::finite_markov: {
        if (transition.rows() < 1 || transition.rows() != transition.cols())
          throw std::invalid_argument("finite_markov needs a square transition matrix");
        for (Eigen::Index i = 0; i < transition.rows(); ++i) {
          if (transition.row(i).minCoeff() < 0.0) throw std::invalid_argument("transition probabilities must be >= 0");
          if (std::abs(transition.row(i).sum() - 1.0) > 1e-12)
            throw std::invalid_argument("transition row " + std::to_string(i) + " does not sum to 1");
        }
        if (g_values.size() != transition.rows())
          throw std::invalid_argument("g must give one value per state");
        if (atom && (*atom < 0 || *atom >= transition.rows())) throw std::invalid_argument("atom is not a state");
        break;
      }
      case ChainKind::mm1_waiting:
        if (!(arrival_rate > 0.0 && service_rate > 0.0)) throw std::invalid_argument("M/M/1 rates must be positive");
        if (!(arrival_rate < service_rate)) throw std::invalid_argument("M/M/1 utilization must be < 1");
        if (burn_in < 0) throw std::invalid_argument("burn_in must be >= 0");
        break;
      case ChainKind::ar1:
        if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("AR(1) coefficient must satisfy |phi| < 1");
        if (!(noise_sd > 0.0)) throw std::invalid_argument("AR(1) noise_sd must be positive");
        break;
    }
  }

  bool has_atom() const { return kind == ChainKind::mm1_waiting || (kind == ChainKind::finite_markov && atom); }

  double g(double state) const {
    if (kind == ChainKind::finite_markov) return g_values[static_cast<Eigen::Index>(state)];
    return state;
  }

  bool in_atom(double state) const {
    if (kind == ChainKind::finite_markov) return atom && static_cast<int>(state) == *atom;
    if (kind == ChainKind::mm1_waiting) return state == 0.0;
    return false;
  }

  /// E_pi g, when computable.
  double target() const {
    if (stationary_target) return *stationary_target;
    switch (kind) {
      case ChainKind::finite_markov: return stationary_distribution(transition).dot(g_values);
      case ChainKind::mm1_waiting: {
        const double rho = arrival_rate / service_rate;
        return rho / (service_rate - arrival_rate);
      }
      case ChainKind::ar1: return ar_mean;
    }
    return 0.0;
  }

  /// Expected regeneration cycle length.
  double mean_cycle_length() const {
    if (kind == ChainKind::finite_markov && atom) return 1.0 / stationary_distribution(transition)[*atom];
    if (kind == ChainKind::mm1_waiting) return 1.0 / (1.0 - arrival_rate / service_rate);
    throw std::invalid_argument("chain has no atom");
  }
};

/// Step-by-step sampler with the documented initialization.
class ChainSimulator {
 public:
  ChainSimulator(const ChainSpec& spec, Rng& rng) : spec_(&spec), rng_(&rng) {
    spec.validate();
    if (spec.kind == ChainKind::finite_markov) {
      const Eigen::Index m = spec.transition.rows();
      cum_.resize(m, m);
      for (Eigen::Index i = 0; i < m; ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) cum_(i, j) = (s += spec.transition(i, j));
      }
      const Vector pi = stationary_distribution(spec.transition);
      state_ = static_cast<double>(sample_from(pi));
    } else if (spec.kind == ChainKind::mm1_waiting) {
      state_ = 0.0;
      for (int k = 0; k < spec.burn_in; ++k) advance();
    } else {
      const double sd = spec.noise_sd / std::sqrt(1.0 - spec.phi * spec.phi);
      state_ = spec.ar_mean + sd * std::normal_distribution<double>()(rng);
    }
  }

  double state() const { return state_; }

  double next() {
    const double out = state_;
    advance();
    return out;
  }

 private:
  Eigen::Index sample_from(const Vector& p) {
    const double u = std::uniform_real_distribution<double>()(*rng_);
    double s = 0.0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      s += p[j];
      if (u < s) return j;
    }
    return p.size() - 1;
  }

  void advance() {
    const auto& sp = *spec_;
    switch (sp.kind) {
      case ChainKind::finite_markov: {
        const Eigen::Index i = static_cast<Eigen::Index>(state_);
        const double u = std::uniform_real_distribution<double>()(*rng_);
        const Eigen::Index m = cum_.cols();
        Eigen::Index j = 0;
        while (j < m - 1 && u >= cum_(i, j)) ++j;
        state_ = static_cast<double>(j);
        break;
      }
      case ChainKind::mm1_waiting: {
        const double s = std::exponential_distribution<double>(sp.service_rate)(*rng_);
        const double a = std::exponential_distribution<double>(sp.arrival_rate)(*rng_);
        state_ = std::max(0.0, state_ + s - a);
        break;
      }
      case ChainKind::ar1:
        state_ = sp.ar_mean + sp.phi * (state_ - sp.ar_mean) + sp.noise_sd * std::normal_distribution<double>()(*rng_);
        break;
    }
  }

  const ChainSpec* spec_;
  Rng* rng_;
  Matrix cum_;
  double state_ = 0.0;
};

/// `length` consecutive states starting from the chain's initialization.
inline std::vector<double> simulate(const ChainSpec& spec, std::size_t length, Rng& rng) {
  ChainSimulator sim(spec, rng);
  std::vector<double> out(length);
  for (auto& x : out) x = sim.next();
  return out;
}

/// K batches of length n separated by `gap` discarded observations.
inline std::vector<std::vector<double>> gap_batches(const std::vector<double>& trajectory, int n, int K, int gap) {
  BatchLayout{K, n, gap}.validate();
  const std::size_t need = static_cast<std::size_t>(K) * n + static_cast<std::size_t>(K - 1) * gap;
  if (trajectory.size() < need)
    throw std::invalid_argument("trajectory of length " + std::to_string(trajectory.size()) + " is shorter than the " +
                                std::to_string(need) + " required by the gap layout");
  std::vector<std::vector<double>> out(K);
  for (int i = 0; i < K; ++i) {
    const std::size_t start = static_cast<std::size_t>(i) * (n + gap);
    out[i].assign(trajectory.begin() + start, trajectory.begin() + start + n);
  }
  return out;
}

/// ceil(n^delta); the default delta is 1/2.
inline int default_gap(int n, double delta = 0.5) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("gap exponent must lie in (0,1)");
  return static_cast<int>(std::ceil(std::pow(static_cast<double>(n), delta) - 1e-12));
}

struct RegenerativePair {
  double Y = 0.0;
  int tau = 0;
};

/// Cycle sums and lengths between consecutive atom visits; the segment before the first visit is dropped.
inline std::vector<RegenerativePair> regenerative_pairs(const std::vector<double>& trajectory,
                                                        const std::function<bool(double)>& in_atom,
                                                        const std::function<double(double)>& g) {
  std::vector<RegenerativePair> out;
  std::size_t visits = 0;
  RegenerativePair cur;
  for (double x : trajectory) {
    if (in_atom(x)) {
      if (visits > 0) out.push_back(cur);
      ++visits;
      cur = RegenerativePair{};
    }
    if (visits > 0) {
      cur.Y += g(x);
      ++cur.tau;
    }
  }
  if (visits < 2) throw std::invalid_argument("trajectory visits the atom fewer than 2 times; simulate a longer path");
  return out;
}

inline std::vector<RegenerativePair> regenerative_pairs(const std::vector<double>& trajectory, const ChainSpec& spec) {
  if (!spec.has_atom()) throw std::invalid_argument("chain has no atom");
  return regenerative_pairs(
      trajectory, [&](double x) { return spec.in_atom(x); }, [&](double x) { return spec.g(x); });
}

/// f(x, y) = x / y at the given mean point.
inline ModelSpec ratio_model(const Vector& mean) {
  if (mean.size() != 2) throw std::invalid_argument("ratio_model needs a 2-dimensional mean point");
  const double x = mean[0];
  const double y = mean[1];
  if (!(y > 0.0)) throw std::invalid_argument("ratio_model needs a positive second mean coordinate");
  Vector u(2);
  u << 1.0 / y, -x / (y * y);
  Matrix v(2, 2);
  v << 0.0, -1.0 / (y * y), -1.0 / (y * y), 2.0 * x / (y * y * y);
  v *= 0.5;
  Tensor3 w(2);
  // f_xyy = 2/y^3, f_yyy = -6x/y^4
  const double fxyy = 2.0 / (y * y * y);
  w(0, 1, 1) = w(1, 0, 1) = w(1, 1, 0) = fxyy / 6.0;
  w(1, 1, 1) = -6.0 * x / (y * y * y * y) / 6.0;
  return ModelSpec::from_callback([](const Vector& p) { return p[0] / p[1]; }, mean, u, v, w);
}

inline ModelSpec identity_model() {
  return ModelSpec::from_polynomial(Polynomial(1, {{{1}, 1.0}}), Vector::Zero(1));
}

enum class DependentApproach { gap, regenerative };

inline DependentApproach parse_approach(const std::string& s) {
  if (s == "gap") return DependentApproach::gap;
  if (s == "regenerative") return DependentApproach::regenerative;
  throw std::invalid_argument("unknown dependent approach '" + s + "'");
}

struct DependentOptions {
  DependentApproach approach = DependentApproach::regenerative;
  int gap = -1;  // negative selects ceil(sqrt(n))
  CoverageOptions coverage;
};

/// Coverage of E_pi g by intervals built from gap-separated batches or from regeneration cycles.
inline std::vector<CoverageReport> dependent_coverage(const ChainSpec& chain, const std::vector<Method>& methods,
                                                      int K, int n, double alpha, const DependentOptions& opt) {
  chain.validate();
  BatchLayout{K, n, 0}.validate();
  const double psi0 = chain.target();

  if (opt.approach == DependentApproach::gap) {
    const int gap = opt.gap < 0 ? default_gap(n) : opt.gap;
    ModelSpec model = identity_model();
    auto draw = [&](Rng& rng, std::vector<Vector>& means, Vector& pooled) {
      ChainSimulator sim(chain, rng);
      means.assign(K, Vector::Zero(1));
      pooled = Vector::Zero(1);
      for (int i = 0; i < K; ++i) {
        if (i > 0)
          for (int k = 0; k < gap; ++k) sim.next();
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += chain.g(sim.next());
        means[i][0] = s / n;
        pooled[0] += means[i][0];
      }
      pooled[0] /= K;
    };
    return coverage_loop(model, methods, K, alpha, psi0, opt.coverage, draw);
  }

  if (!chain.has_atom()) throw std::invalid_argument("regenerative approach needs a chain with an atom");
  const double et = chain.mean_cycle_length();
  const ModelSpec model = ratio_model((Vector(2) << psi0 * et, et).finished());
  const std::uint64_t max_steps = 1000000000ULL;
  auto draw = [&](Rng& rng, std::vector<Vector>& means, Vector& pooled) {
    ChainSimulator sim(chain, rng);
    means.assign(K, Vector::Zero(2));
    pooled = Vector::Zero(2);
    std::uint64_t steps = 0;
    double x = sim.next();
    while (!chain.in_atom(x)) {
      x = sim.next();
      if (++steps > max_steps) throw std::runtime_error("chain did not reach its atom");
    }
    for (int i = 0; i < K; ++i) {
      for (int c = 0; c < n; ++c) {
        double Y = 0.0;
        int tau = 0;
        do {
          Y += chain.g(x);
          ++tau;
          x = sim.next();
          if (++steps > max_steps) throw std::runtime_error("chain did not return to its atom");
        } while (!chain.in_atom(x));
        means[i][0] += Y;
        means[i][1] += tau;
      }
      means[i] /= static_cast<double>(n);
      pooled += means[i];
    }
    pooled /= static_cast<double>(K);
  };
  return coverage_loop(model, methods, K, alpha, psi0, opt.coverage, draw);
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<double>& trajectory, const ChainSpec& spec) {
  os << "index,state,g\n";
  for (std::size_t i = 0; i < trajectory.size(); ++i) os << i << ',' << trajectory[i] << ',' << spec.g(trajectory[i]) << '\n';
}

}  // namespace batchcov

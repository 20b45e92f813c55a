#pragma once

#include "batchcov/coeff_mc.hpp"
#include "batchcov/config.hpp"
#include "batchcov/dependent.hpp"
#include "batchcov/oracle.hpp"
#include "batchcov/stats_core.hpp"
#include "batchcov/t_dist.hpp"

#include <charconv>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace batchcov {

/// One output row; absent fields are written as empty CSV cells or JSON null.
struct ResultRow {
  std::string method;
  int K = 0;
  std::optional<double> n;
  std::optional<double> alpha;
  std::optional<double> q;
  std::optional<double> c_hat;
  std::optional<double> c_halfwidth;
  std::optional<double> theoretical_coverage;
  std::optional<double> empirical_coverage;
  std::optional<double> empirical_halfwidth;
  std::optional<std::uint64_t> rejected_reps;
  std::optional<double> wall_seconds;
};

struct CompareRow {
  std::string method;
  int K = 0;
  double q = 0.0;
  std::string reference;
  double c_alg1 = 0.0;
  double halfwidth_alg1 = 0.0;
  double c_reference = 0.0;
  double halfwidth_reference = 0.0;
  bool agree = false;
  bool expected_disagreement = false;
};

struct OracleRow {
  double lambda = 0.0;
  double q = 0.0;
  double alpha = 0.0;
  std::string method;
  double coefficient = 0.0;
  std::optional<bool> ordering_holds;
};

struct ExperimentOutput {
  std::vector<ResultRow> rows;
  std::vector<CompareRow> compare;
  std::vector<OracleRow> oracle;
  std::vector<std::string> warnings;
};

struct RunOptions {
  int workers = 1;
  bool timing = false;
  std::function<void(const std::string&)> progress;  // optional
};

inline const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> c{"method", "K", "n", "alpha", "q", "c_hat", "c_halfwidth",
                                          "theoretical_coverage", "empirical_coverage", "empirical_halfwidth",
                                          "rejected_reps", "wall_seconds"};
  return c;
}

namespace detail {

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double x) {
  if (x == 0.0) x = 0.0;  // no "-0"
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::string cell(const std::optional<double>& x) { return x ? format_double(*x) : std::string(); }
inline std::string cell(const std::optional<std::uint64_t>& x) { return x ? std::to_string(*x) : std::string(); }

inline Json jnum(const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); }
inline Json jnum(const std::optional<std::uint64_t>& x) { return x ? Json(*x) : Json(nullptr); }

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                                 std::uint64_t d = 0) {
  std::uint64_t s = splitmix64(seed);
  for (std::uint64_t x : {a, b, c, d}) s = splitmix64(s ^ splitmix64(x + 0x2545F4914F6CDD1DULL));
  return s;
}

struct Level {
  std::optional<double> alpha;
  std::optional<double> q;
};

inline std::vector<Level> levels(const ExperimentConfig& c) {
  std::vector<Level> out;
  for (double a : c.alphas) out.push_back({a, std::nullopt});
  for (double q : c.qs) out.push_back({std::nullopt, q});
  return out;
}

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

inline void say(const RunOptions& ro, const std::string& msg) {
  if (ro.progress) ro.progress(msg);
}

}  // namespace detail

inline void write_csv(std::ostream& os, const ExperimentOutput& out) {
  using detail::cell;
  using detail::format_double;
  if (!out.oracle.empty()) {
    os << "lambda,q,alpha,method,c,ordering_holds\n";
    for (const auto& r : out.oracle)
      os << format_double(r.lambda) << ',' << format_double(r.q) << ',' << format_double(r.alpha) << ',' << r.method
         << ',' << format_double(r.coefficient) << ','
         << (r.ordering_holds ? (*r.ordering_holds ? "true" : "false") : "") << '\n';
    return;
  }
  if (!out.compare.empty()) {
    os << "method,K,q,reference,c_alg1,halfwidth_alg1,c_reference,halfwidth_reference,agree,expected_disagreement\n";
    for (const auto& r : out.compare)
      os << r.method << ',' << r.K << ',' << format_double(r.q) << ',' << r.reference << ','
         << format_double(r.c_alg1) << ',' << format_double(r.halfwidth_alg1) << ',' << format_double(r.c_reference)
         << ',' << format_double(r.halfwidth_reference) << ',' << (r.agree ? "true" : "false") << ','
         << (r.expected_disagreement ? "true" : "false") << '\n';
    return;
  }
  const auto& cols = result_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : out.rows) {
    os << r.method << ',' << r.K << ',' << cell(r.n) << ',' << cell(r.alpha) << ',' << cell(r.q) << ','
       << cell(r.c_hat) << ',' << cell(r.c_halfwidth) << ',' << cell(r.theoretical_coverage) << ','
       << cell(r.empirical_coverage) << ',' << cell(r.empirical_halfwidth) << ',' << cell(r.rejected_reps) << ','
       << cell(r.wall_seconds) << '\n';
  }
}

inline Json to_json(const ExperimentOutput& out) {
  using detail::jnum;
  Json rows = Json::array();
  if (!out.oracle.empty()) {
    for (const auto& r : out.oracle)
      rows.push_back({{"lambda", r.lambda},
                      {"q", r.q},
                      {"alpha", r.alpha},
                      {"method", r.method},
                      {"c", r.coefficient},
                      {"ordering_holds", r.ordering_holds ? Json(*r.ordering_holds) : Json(nullptr)}});
  } else if (!out.compare.empty()) {
    for (const auto& r : out.compare)
      rows.push_back({{"method", r.method},
                      {"K", r.K},
                      {"q", r.q},
                      {"reference", r.reference},
                      {"c_alg1", r.c_alg1},
                      {"halfwidth_alg1", r.halfwidth_alg1},
                      {"c_reference", r.c_reference},
                      {"halfwidth_reference", r.halfwidth_reference},
                      {"agree", r.agree},
                      {"expected_disagreement", r.expected_disagreement}});
  } else {
    for (const auto& r : out.rows)
      rows.push_back({{"method", r.method},
                      {"K", r.K},
                      {"n", jnum(r.n)},
                      {"alpha", jnum(r.alpha)},
                      {"q", jnum(r.q)},
                      {"c_hat", jnum(r.c_hat)},
                      {"c_halfwidth", jnum(r.c_halfwidth)},
                      {"theoretical_coverage", jnum(r.theoretical_coverage)},
                      {"empirical_coverage", jnum(r.empirical_coverage)},
                      {"empirical_halfwidth", jnum(r.empirical_halfwidth)},
                      {"rejected_reps", jnum(r.rejected_reps)},
                      {"wall_seconds", jnum(r.wall_seconds)}});
  }
  Json doc = {{"rows", rows}};
  if (!out.warnings.empty()) doc["warnings"] = out.warnings;
  return doc;
}

inline void write_output(std::ostream& os, const ExperimentOutput& out, const std::string& format) {
  if (format == "json")
    os << to_json(out).dump(2) << '\n';
  else
    write_csv(os, out);
}

namespace detail {

inline CoefficientEstimate run_coefficient(const ExperimentConfig& c, Method m, int K, const Level& lv,
                                           std::uint64_t seed, int workers) {
  CoefficientOptions co;
  co.reps = c.coefficient_reps;
  co.seed = seed;
  co.workers = workers;
  const CriticalValue cv = lv.q ? CriticalValue::from_q(*lv.q) : CriticalValue::from_alpha(*lv.alpha);
  if (c.algorithm == Algorithm::alg2) return estimate_coefficient_alg2(*c.model, *c.dist, K, cv, co);
  return estimate_coefficient(*c.model, *c.dist, K, cv, m, co);
}

inline void fill_level(ResultRow& row, int K, const Level& lv) {
  if (lv.alpha) {
    row.alpha = *lv.alpha;
    row.q = t_quantile(K - 1, 0.5 * *lv.alpha);
  } else {
    row.q = *lv.q;
    row.alpha = 1.0 - t_central_probability(K - 1, *lv.q);
  }
}

// Nominal coverage implied by a level; q-levels are two-sided.
inline double nominal_of(int K, const Level& lv) {
  return lv.alpha ? 1.0 - *lv.alpha : t_central_probability(K - 1, *lv.q);
}

inline ExperimentOutput run_grid(const ExperimentConfig& c, const RunOptions& ro) {
  const std::string& cmd = c.command;
  const bool want_coef = cmd == "coefficient" || cmd == "k-sweep" || cmd == "fixed-n-sweep";
  ExperimentOutput out;
  const auto lvls = levels(c);
  for (int K : c.Ks) {
    std::optional<double> n;
    if (c.N) n = static_cast<double>(*c.N) / K;
    else if (c.n) n = static_cast<double>(*c.n);
    if (cmd == "fixed-n-sweep" && *n < 1.0) throw ConfigError("config.N: N/K < 1 at K=" + std::to_string(K));

    bool want_cov = cmd == "coverage" || cmd == "k-sweep";
    int cov_n = c.n.value_or(0);
    if (cmd == "fixed-n-sweep" && c.coverage_reps > 0 && *c.N % K == 0) {
      want_cov = true;
      cov_n = *c.N / K;
    }

    for (std::size_t li = 0; li < lvls.size(); ++li) {
      const Level& lv = lvls[li];
      std::vector<ResultRow> rows(c.methods.size());
      for (std::size_t mi = 0; mi < c.methods.size(); ++mi) {
        rows[mi].method = method_name(c.methods[mi]);
        rows[mi].K = K;
        rows[mi].n = n;
        fill_level(rows[mi], K, lv);
        if (c.sided != Sided::two_sided_symmetric && lv.alpha) rows[mi].q = t_quantile(K - 1, *lv.alpha);
      }
      std::vector<double> wall(c.methods.size(), 0.0);

      if (want_coef) {
        for (std::size_t mi = 0; mi < c.methods.size(); ++mi) {
          say(ro, cmd + ": K=" + std::to_string(K) + " " + rows[mi].method + " coefficient");
          Stopwatch sw;
          const auto est = run_coefficient(c, c.methods[mi], K, lv, derive_seed(c.seed, 1, K, li, mi), ro.workers);
          wall[mi] += sw.seconds();
          rows[mi].q = est.q;
          rows[mi].c_hat = est.c_hat;
          rows[mi].c_halfwidth = est.halfwidth95;
          rows[mi].rejected_reps = est.rejected;
          if (n) rows[mi].theoretical_coverage = theoretical_coverage(nominal_of(K, lv), est.c_hat, *n);
          for (const auto& w : est.warnings)
            out.warnings.push_back("K=" + std::to_string(K) + " " + rows[mi].method + ": " + w);
          if (est.approximate_cumulants)
            out.warnings.push_back("K=" + std::to_string(K) + " " + rows[mi].method +
                                   ": cumulants estimated from samples; coefficient is approximate");
        }
      }

      if (want_cov) {
        // a q level maps to the alpha whose critical value is q
        const double alpha = lv.alpha ? *lv.alpha : 1.0 - t_central_probability(K - 1, *lv.q);
        say(ro, cmd + ": K=" + std::to_string(K) + " empirical coverage");
        CoverageOptions co;
        co.sided = c.sided;
        co.reps = c.coverage_reps;
        co.seed = derive_seed(c.seed, 2, K, li);
        co.workers = ro.workers;
        co.exact_batch_means = c.exact_batch_means;
        Stopwatch sw;
        const auto reps = empirical_coverage(*c.dist, *c.model, BatchLayout{K, cov_n, 0}, c.methods, alpha, co);
        const double t = sw.seconds();
        for (std::size_t mi = 0; mi < c.methods.size(); ++mi) {
          wall[mi] += t;
          rows[mi].empirical_coverage = reps[mi].coverage;
          rows[mi].empirical_halfwidth = reps[mi].halfwidth;
          if (reps[mi].degenerate)
            out.warnings.push_back("K=" + std::to_string(K) + " " + rows[mi].method + ": " +
                                   std::to_string(reps[mi].degenerate) + " degenerate intervals");
        }
      }
      for (std::size_t mi = 0; mi < c.methods.size(); ++mi) {
        if (ro.timing) rows[mi].wall_seconds = wall[mi];
        out.rows.push_back(rows[mi]);
      }
    }
  }
  return out;
}

inline ExperimentOutput run_oracle(const ExperimentConfig& c) {
  ExperimentOutput out;
  std::vector<double> qs = c.qs;
  for (double a : c.alphas) qs.push_back(t_quantile(1, 0.5 * a));
  for (double lambda : c.lambdas) {
    for (double q : qs) {
      std::optional<bool> holds;
      if (q >= 1.0 && lambda != 0.0) {
        try {
          holds = k2_ordering_check(lambda, q).holds;
        } catch (const std::logic_error&) {
          holds = false;
        }
      }
      for (Method m : c.methods) {
        OracleRow r;
        r.lambda = lambda;
        r.q = q;
        r.alpha = 1.0 - t_central_probability(1, q);
        r.method = method_name(m);
        r.coefficient = k2_coefficient(K2Model{lambda}, m, q);
        r.ordering_holds = holds;
        out.oracle.push_back(r);
      }
    }
  }
  return out;
}

// lambda for f(x) = x + lambda x^2 under N(0,1); the only model with a closed-form K = 2 reference.
inline double k2_lambda_of(const ExperimentConfig& c) {
  const auto& m = *c.model;
  const auto& d = *c.dist;
  const bool ok = m.d == 1 && d.construction == DistributionSpec::Construction::gaussian &&
                  std::abs(d.sigma(0, 0) - 1.0) < 1e-12 && std::abs(d.mean[0]) < 1e-12 &&
                  std::abs(m.u[0] - 1.0) < 1e-12 && m.w.is_zero();
  if (!ok)
    throw ConfigError("config.model: the closed-form reference needs f(x) = x + lambda x^2 with N(0,1) data");
  return m.v(0, 0);
}

inline ExperimentOutput run_compare(const ExperimentConfig& c, const RunOptions& ro) {
  ExperimentOutput out;
  const auto lvls = levels(c);
  const double lambda = c.reference == "oracle" ? k2_lambda_of(c) : 0.0;
  for (int K : c.Ks) {
    for (std::size_t li = 0; li < lvls.size(); ++li) {
      for (std::size_t mi = 0; mi < c.methods.size(); ++mi) {
        const Method m = c.methods[mi];
        if (c.reference == "alg2" && m != Method::batching) continue;
        say(ro, "compare: K=" + std::to_string(K) + " " + method_name(m));
        ExperimentConfig c1 = c;
        c1.algorithm = Algorithm::alg1;
        const auto a1 = run_coefficient(c1, m, K, lvls[li], derive_seed(c.seed, 3, K, li, mi), ro.workers);
        CompareRow r;
        r.method = method_name(m);
        r.K = K;
        r.q = a1.q;
        r.reference = c.reference;
        r.c_alg1 = a1.c_hat;
        r.halfwidth_alg1 = a1.halfwidth95;
        if (c.reference == "alg2") {
          ExperimentConfig c2 = c;
          c2.algorithm = Algorithm::alg2;
          const auto a2 = run_coefficient(c2, m, K, lvls[li], derive_seed(c.seed, 4, K, li, mi), ro.workers);
          r.c_reference = a2.c_hat;
          r.halfwidth_reference = a2.halfwidth95;
        } else {
          r.c_reference = k2_coefficient(K2Model{lambda}, m, a1.q);
          r.halfwidth_reference = 0.0;
        }
        r.agree = std::abs(r.c_alg1 - r.c_reference) <= r.halfwidth_alg1 + r.halfwidth_reference;
        // alg1 is not valid for batching with two batches.
        r.expected_disagreement = K == 2 && m == Method::batching;
        if (!r.agree)
          out.warnings.push_back("K=" + std::to_string(K) + " " + r.method + ": alg1 and " + c.reference +
                                 " disagree" + (r.expected_disagreement ? " (expected for batching at K=2)" : ""));
        out.compare.push_back(r);
      }
    }
  }
  return out;
}

inline ExperimentOutput run_dependent(const ExperimentConfig& c, const RunOptions& ro) {
  ExperimentOutput out;
  if (!c.trajectory_csv.empty()) {
    auto rng = substream(c.seed, 0xC5AULL);
    const auto traj = simulate(*c.chain, c.trajectory_length, rng);
    std::ofstream f(c.trajectory_csv);
    if (!f) throw ConfigError("config.trajectory_csv.path: cannot write '" + c.trajectory_csv + "'");
    write_trajectory_csv(f, traj, *c.chain);
  }
  for (int K : c.Ks) {
    for (std::size_t li = 0; li < c.alphas.size(); ++li) {
      say(ro, "dependent: K=" + std::to_string(K));
      DependentOptions o;
      o.approach = c.approach;
      o.gap = c.gap;
      o.coverage.sided = c.sided;
      o.coverage.reps = c.coverage_reps;
      o.coverage.seed = derive_seed(c.seed, 5, K, li);
      o.coverage.workers = ro.workers;
      Stopwatch sw;
      const auto reps = dependent_coverage(*c.chain, c.methods, K, *c.n, c.alphas[li], o);
      const double t = sw.seconds();
      for (std::size_t mi = 0; mi < c.methods.size(); ++mi) {
        ResultRow r;
        r.method = method_name(c.methods[mi]);
        r.K = K;
        r.n = *c.n;
        r.alpha = c.alphas[li];
        r.q = critical_value(K, c.alphas[li], c.sided);
        r.empirical_coverage = reps[mi].coverage;
        r.empirical_halfwidth = reps[mi].halfwidth;
        if (ro.timing) r.wall_seconds = t;
        out.rows.push_back(r);
      }
    }
  }
  return out;
}

}  // namespace detail

inline ExperimentOutput run_experiment(const ExperimentConfig& c, const RunOptions& ro = {}) {
  if (c.command == "oracle-k2") return detail::run_oracle(c);
  if (c.command == "compare") return detail::run_compare(c, ro);
  if (c.command == "dependent") return detail::run_dependent(c, ro);
  return detail::run_grid(c, ro);
}

}  // namespace batchcov

#pragma once

#include "batchcov/coeff_mc.hpp"
#include "batchcov/dependent.hpp"
#include "batchcov/model.hpp"
#include "batchcov/stats_core.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace batchcov {

using Json = nlohmann::json;

/// Malformed or inconsistent experiment definition; the message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

inline const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> c{"coverage", "coefficient", "oracle-k2", "compare",
                                          "k-sweep",  "fixed-n-sweep", "dependent"};
  return c;
}

struct ExperimentConfig {
  int version = kConfigVersion;
  std::string command;

  std::optional<ModelSpec> model;
  std::optional<DistributionSpec> dist;
  std::optional<ChainSpec> chain;

  std::vector<int> Ks;
  std::optional<int> n;
  std::optional<int> N;
  std::vector<double> alphas;
  std::vector<double> qs;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  Algorithm algorithm = Algorithm::alg1;
  Sided sided = Sided::two_sided_symmetric;
  bool exact_batch_means = true;

  std::uint64_t coverage_reps = 0;
  std::uint64_t coefficient_reps = 0;
  std::uint64_t seed = 1;

  std::string out_path;
  std::string format = "csv";

  // dependent
  DependentApproach approach = DependentApproach::regenerative;
  int gap = -1;
  std::string trajectory_csv;
  std::size_t trajectory_length = 1000;

  // oracle-k2
  std::vector<double> lambdas;

  // compare
  std::string reference = "alg2";
};

namespace cfg {

inline void check_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(path + "." + it.key() + ": unknown key");
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  return j.get<double>();
}

inline std::int64_t integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) throw ConfigError(path + ": expected an integer");
  return j.get<std::int64_t>();
}

inline std::string string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  return j.get<std::string>();
}

inline bool boolean(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path + ": expected a boolean");
  return j.get<bool>();
}

inline std::vector<double> numbers(const Json& j, const std::string& path) {
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(j.get<double>());
    return out;
  }
  if (!j.is_array()) throw ConfigError(path + ": expected a number or an array of numbers");
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline Vector vector(const Json& j, const std::string& path) {
  const auto v = numbers(j, path);
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

inline Matrix matrix(const Json& j, const std::string& path, int d) {
  if (!j.is_array() || static_cast<int>(j.size()) != d) throw ConfigError(path + ": expected " + std::to_string(d) + " rows");
  Matrix m(d, d);
  for (int i = 0; i < d; ++i) {
    const auto row = numbers(j[i], path + "[" + std::to_string(i) + "]");
    if (static_cast<int>(row.size()) != d) throw ConfigError(path + ": row " + std::to_string(i) + " has wrong length");
    for (int k = 0; k < d; ++k) m(i, k) = row[k];
  }
  return m;
}

inline Tensor3 tensor3(const Json& j, const std::string& path, int d) {
  Tensor3 t(d);
  if (!j.is_array() || static_cast<int>(j.size()) != d) throw ConfigError(path + ": expected nested arrays of size " + std::to_string(d));
  for (int i = 0; i < d; ++i) {
    const Matrix m = matrix(j[i], path + "[" + std::to_string(i) + "]", d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) t(i, a, b) = m(a, b);
  }
  return t;
}

inline Tensor4 tensor4(const Json& j, const std::string& path, int d) {
  Tensor4 t(d);
  if (!j.is_array() || static_cast<int>(j.size()) != d) throw ConfigError(path + ": expected nested arrays of size " + std::to_string(d));
  for (int i = 0; i < d; ++i) {
    const Tensor3 s = tensor3(j[i], path + "[" + std::to_string(i) + "]", d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c) t(i, a, b, c) = s(a, b, c);
  }
  return t;
}

inline std::vector<int> k_values(const Json& j, const std::string& path) {
  std::vector<int> out;
  if (j.is_number_integer()) {
    out.push_back(static_cast<int>(j.get<std::int64_t>()));
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i)
      out.push_back(static_cast<int>(integer(j[i], path + "[" + std::to_string(i) + "]")));
  } else if (j.is_object()) {
    check_keys(j, path, {"from", "to", "step"});
    if (!j.contains("from") || !j.contains("to")) throw ConfigError(path + ": range needs 'from' and 'to'");
    const auto from = integer(j["from"], path + ".from");
    const auto to = integer(j["to"], path + ".to");
    const auto step = j.contains("step") ? integer(j["step"], path + ".step") : 1;
    if (step < 1) throw ConfigError(path + ".step: must be >= 1");
    for (auto k = from; k <= to; k += step) out.push_back(static_cast<int>(k));
  } else {
    throw ConfigError(path + ": expected an integer, an array, or a {from,to,step} range");
  }
  if (out.empty()) throw ConfigError(path + ": K range is empty");
  for (int k : out)
    if (k < 2) throw ConfigError(path + ": every K must be >= 2");
  return out;
}

inline Polynomial polynomial(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty array of terms");
  std::vector<Monomial> terms;
  int d = -1;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    check_keys(j[i], p, {"exps", "coef"});
    if (!j[i].contains("exps") || !j[i].contains("coef")) throw ConfigError(p + ": term needs 'exps' and 'coef'");
    Monomial m;
    const auto& ex = j[i]["exps"];
    if (!ex.is_array()) throw ConfigError(p + ".exps: expected an array");
    for (std::size_t k = 0; k < ex.size(); ++k) m.exps.push_back(static_cast<int>(integer(ex[k], p + ".exps")));
    m.coef = number(j[i]["coef"], p + ".coef");
    if (d < 0) d = static_cast<int>(m.exps.size());
    if (static_cast<int>(m.exps.size()) != d) throw ConfigError(p + ".exps: dimension mismatch between terms");
    terms.push_back(std::move(m));
  }
  try {
    return Polynomial(d, std::move(terms));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline DistributionSpec distribution(const Json& j, const std::string& path) {
  check_keys(j, path, {"kind", "params", "cumulants"});
  if (!j.contains("kind")) throw ConfigError(path + ".kind: missing");
  const std::string kind = string(j["kind"], path + ".kind");
  const Json params = j.contains("params") ? j["params"] : Json::object();
  const std::string pp = path + ".params";
  DistributionSpec out;
  try {
    if (kind == "normal") {
      check_keys(params, pp, {"d", "mean", "cov"});
      int d = params.contains("d") ? static_cast<int>(integer(params["d"], pp + ".d")) : -1;
      Vector mean;
      if (params.contains("mean")) mean = vector(params["mean"], pp + ".mean");
      if (d < 0) d = mean.size() ? static_cast<int>(mean.size()) : 1;
      if (!mean.size()) mean = Vector::Zero(d);
      if (mean.size() != d) throw ConfigError(pp + ".mean: length disagrees with d");
      Matrix cov = params.contains("cov") ? matrix(params["cov"], pp + ".cov", d) : Matrix::Identity(d, d);
      out = DistributionSpec::normal(mean, cov);
    } else if (kind == "exp_centered" || kind == "chisq1_centered") {
      check_keys(params, pp, {"d"});
      const int d = params.contains("d") ? static_cast<int>(integer(params["d"], pp + ".d")) : 1;
      if (d < 1) throw ConfigError(pp + ".d: must be >= 1");
      out = DistributionSpec::independent(
          std::vector<Marginal>(d, kind == "exp_centered" ? Marginal::exp_centered : Marginal::chisq1_centered),
          parse_dist_kind(kind));
    } else if (kind == "custom") {
      check_keys(params, pp, {"marginals", "construction"});
      if (params.contains("construction")) {
        const std::string c = string(params["construction"], pp + ".construction");
        if (c != "normal_square") throw ConfigError(pp + ".construction: unknown construction '" + c + "'");
        if (params.contains("marginals")) throw ConfigError(pp + ": give either 'marginals' or 'construction'");
        out = DistributionSpec::normal_square();
      } else if (params.contains("marginals")) {
        const auto& ms = params["marginals"];
        if (!ms.is_array() || ms.empty()) throw ConfigError(pp + ".marginals: expected a non-empty array");
        std::vector<Marginal> v;
        for (std::size_t i = 0; i < ms.size(); ++i) v.push_back(parse_marginal(string(ms[i], pp + ".marginals")));
        out = DistributionSpec::independent(std::move(v));
      } else {
        throw ConfigError(pp + ": custom distribution needs 'marginals' or 'construction'");
      }
    } else {
      throw ConfigError(path + ".kind: unknown distribution kind '" + kind + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }

  if (j.contains("cumulants")) {
    const auto& c = j["cumulants"];
    const std::string cp = path + ".cumulants";
    check_keys(c, cp, {"sigma", "chi3", "chi4", "exact", "estimate_from_samples", "seed"});
    const int d = out.d;
    if (c.contains("estimate_from_samples")) {
      if (c.contains("sigma") || c.contains("chi3") || c.contains("chi4"))
        throw ConfigError(cp + ": give either explicit tensors or estimate_from_samples");
      const auto ns = integer(c["estimate_from_samples"], cp + ".estimate_from_samples");
      const std::uint64_t seed = c.contains("seed") ? static_cast<std::uint64_t>(integer(c["seed"], cp + ".seed")) : 1;
      auto rng = substream(seed, 0);
      std::vector<Vector> xs(static_cast<std::size_t>(std::max<std::int64_t>(ns, 0)));
      for (auto& x : xs) x = out.sample(rng);
      try {
        auto sc = cumulants_from_samples(xs);
        out.override_cumulants(sc.sigma, sc.chi3, sc.chi4, false);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(cp + ": " + e.what());
      }
    } else {
      if (c.contains("seed")) throw ConfigError(cp + ".seed: only valid with estimate_from_samples");
      Matrix sigma = c.contains("sigma") ? matrix(c["sigma"], cp + ".sigma", d) : out.sigma;
      Tensor3 chi3 = c.contains("chi3") ? tensor3(c["chi3"], cp + ".chi3", d) : out.chi3;
      Tensor4 chi4 = c.contains("chi4") ? tensor4(c["chi4"], cp + ".chi4", d) : out.chi4;
      const bool exact = c.contains("exact") ? boolean(c["exact"], cp + ".exact") : true;
      try {
        out.override_cumulants(sigma, chi3, chi4, exact);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(cp + ": " + e.what());
      }
    }
  }
  return out;
}

inline ModelSpec model(const Json& j, const std::string& path, const Vector& mean) {
  check_keys(j, path, {"terms", "outer", "tensors"});
  if (!j.contains("terms")) throw ConfigError(path + ".terms: missing");
  const Polynomial p = polynomial(j["terms"], path + ".terms");
  if (p.dim() != mean.size())
    throw ConfigError(path + ".terms: model dimension " + std::to_string(p.dim()) + " disagrees with distribution dimension " +
                      std::to_string(mean.size()));
  Outer g = Outer::identity;
  if (j.contains("outer")) {
    try {
      g = parse_outer(string(j["outer"], path + ".outer"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path + ".outer: " + e.what());
    }
  }
  ModelSpec m = ModelSpec::from_polynomial(p, mean, g);
  if (j.contains("tensors")) {
    // Recorded tensors must agree with exact differentiation.
    const auto& t = j["tensors"];
    const std::string tp = path + ".tensors";
    check_keys(t, tp, {"u", "v", "w", "source"});
    const int d = m.d;
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };
    if (t.contains("u")) {
      const Vector u = vector(t["u"], tp + ".u");
      if (u.size() != d) throw ConfigError(tp + ".u: wrong length");
      for (int i = 0; i < d; ++i)
        if (!close(u[i], m.u[i])) throw ConfigError(tp + ".u: disagrees with the derivative of f");
    }
    if (t.contains("v")) {
      const Matrix v = matrix(t["v"], tp + ".v", d);
      for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k)
          if (!close(v(i, k), m.v(i, k))) throw ConfigError(tp + ".v: disagrees with the derivative of f");
    }
    if (t.contains("w")) {
      const Tensor3 w = tensor3(t["w"], tp + ".w", d);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int c = 0; c < d; ++c)
            if (!close(w(a, b, c), m.w(a, b, c))) throw ConfigError(tp + ".w: disagrees with the derivative of f");
    }
    if (t.contains("source")) string(t["source"], tp + ".source");
  }
  return m;
}

inline ChainSpec chain(const Json& j, const std::string& path) {
  check_keys(j, path, {"kind", "transition", "g", "atom", "target", "arrival_rate", "service_rate", "burn_in", "phi",
                       "noise_sd", "mean"});
  if (!j.contains("kind")) throw ConfigError(path + ".kind: missing");
  ChainSpec c;
  try {
    c.kind = parse_chain_kind(string(j["kind"], path + ".kind"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ".kind: " + e.what());
  }
  auto forbid = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (j.contains(k)) throw ConfigError(path + "." + k + ": not valid for this chain kind");
  };
  switch (c.kind) {
    case ChainKind::finite_markov: {
      forbid({"arrival_rate", "service_rate", "burn_in", "phi", "noise_sd", "mean"});
      if (!j.contains("transition")) throw ConfigError(path + ".transition: missing");
      const int m = static_cast<int>(j["transition"].size());
      c.transition = matrix(j["transition"], path + ".transition", m);
      c.g_values = j.contains("g") ? vector(j["g"], path + ".g") : Vector::LinSpaced(m, 0.0, m - 1.0);
      if (j.contains("atom")) c.atom = static_cast<int>(integer(j["atom"], path + ".atom"));
      break;
    }
    case ChainKind::mm1_waiting:
      forbid({"transition", "g", "atom", "phi", "noise_sd", "mean"});
      if (j.contains("arrival_rate")) c.arrival_rate = number(j["arrival_rate"], path + ".arrival_rate");
      if (j.contains("service_rate")) c.service_rate = number(j["service_rate"], path + ".service_rate");
      if (j.contains("burn_in")) c.burn_in = static_cast<int>(integer(j["burn_in"], path + ".burn_in"));
      break;
    case ChainKind::ar1:
      forbid({"transition", "g", "atom", "arrival_rate", "service_rate", "burn_in"});
      if (j.contains("phi")) c.phi = number(j["phi"], path + ".phi");
      if (j.contains("noise_sd")) c.noise_sd = number(j["noise_sd"], path + ".noise_sd");
      if (j.contains("mean")) c.ar_mean = number(j["mean"], path + ".mean");
      break;
  }
  if (j.contains("target")) c.stationary_target = number(j["target"], path + ".target");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

}  // namespace cfg

/// Parses a config document. `command` (from the command line) must match the document's command, if it has one.
inline ExperimentConfig parse_config(const Json& j, const std::string& command) {
  using namespace cfg;
  check_keys(j, "config", {"version", "command", "model", "distribution", "chain", "K", "n", "N", "alpha", "q",
                           "methods", "algorithm", "sided", "exact_batch_means", "reps", "seed", "output",
                           "approach", "gap", "trajectory_csv", "lambda", "reference", "description"});
  ExperimentConfig c;
  if (!j.contains("version")) throw ConfigError("config.version: missing");
  c.version = static_cast<int>(integer(j["version"], "config.version"));
  if (c.version != kConfigVersion)
    throw ConfigError("config.version: unsupported version " + std::to_string(c.version));

  c.command = command;
  if (j.contains("command")) {
    const std::string doc = string(j["command"], "config.command");
    if (command.empty()) c.command = doc;
    else if (doc != command)
      throw ConfigError("config.command: document is for '" + doc + "' but '" + command + "' was requested");
  }
  bool known = false;
  for (const auto& k : known_commands()) known = known || k == c.command;
  if (!known) throw ConfigError("command: unknown command '" + c.command + "'");

  if (j.contains("description")) string(j["description"], "config.description");

  if (j.contains("distribution")) c.dist = distribution(j["distribution"], "config.distribution");
  if (j.contains("model")) {
    if (!c.dist) throw ConfigError("config.model: a distribution is required to fix the mean point");
    c.model = model(j["model"], "config.model", c.dist->mean);
  }
  if (j.contains("chain")) c.chain = chain(j["chain"], "config.chain");

  if (j.contains("K")) c.Ks = k_values(j["K"], "config.K");
  if (j.contains("n")) {
    const auto n = integer(j["n"], "config.n");
    if (n < 1) throw ConfigError("config.n: must be >= 1");
    c.n = static_cast<int>(n);
  }
  if (j.contains("N")) {
    const auto N = integer(j["N"], "config.N");
    if (N < 1) throw ConfigError("config.N: must be >= 1");
    c.N = static_cast<int>(N);
  }
  if (j.contains("alpha")) {
    c.alphas = numbers(j["alpha"], "config.alpha");
    for (double a : c.alphas)
      if (!(a > 0.0 && a < 1.0)) throw ConfigError("config.alpha: every level must lie in (0,1)");
  }
  if (j.contains("q")) {
    c.qs = numbers(j["q"], "config.q");
    for (double q : c.qs)
      if (!(q > 0.0)) throw ConfigError("config.q: critical values must be positive");
  }
  if (j.contains("methods")) {
    const auto& ms = j["methods"];
    if (!ms.is_array() || ms.empty()) throw ConfigError("config.methods: expected a non-empty array");
    c.methods.clear();
    for (std::size_t i = 0; i < ms.size(); ++i) {
      try {
        c.methods.push_back(parse_method(string(ms[i], "config.methods")));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.methods: ") + e.what());
      }
    }
  }
  if (j.contains("algorithm")) {
    const std::string a = string(j["algorithm"], "config.algorithm");
    if (a == "alg1") c.algorithm = Algorithm::alg1;
    else if (a == "alg2") c.algorithm = Algorithm::alg2;
    else throw ConfigError("config.algorithm: expected 'alg1' or 'alg2'");
  }
  if (j.contains("sided")) {
    try {
      c.sided = parse_sided(string(j["sided"], "config.sided"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.sided: ") + e.what());
    }
  }
  if (j.contains("exact_batch_means")) c.exact_batch_means = boolean(j["exact_batch_means"], "config.exact_batch_means");
  if (j.contains("reps")) {
    const auto& r = j["reps"];
    if (r.is_number_integer()) {
      const auto v = integer(r, "config.reps");
      if (v < 1) throw ConfigError("config.reps: must be > 0");
      c.coverage_reps = c.coefficient_reps = static_cast<std::uint64_t>(v);
    } else {
      check_keys(r, "config.reps", {"coverage", "coefficient"});
      if (r.contains("coverage")) {
        const auto v = integer(r["coverage"], "config.reps.coverage");
        if (v < 1) throw ConfigError("config.reps.coverage: must be > 0");
        c.coverage_reps = static_cast<std::uint64_t>(v);
      }
      if (r.contains("coefficient")) {
        const auto v = integer(r["coefficient"], "config.reps.coefficient");
        if (v < 1) throw ConfigError("config.reps.coefficient: must be > 0");
        c.coefficient_reps = static_cast<std::uint64_t>(v);
      }
    }
  }
  if (j.contains("seed")) c.seed = static_cast<std::uint64_t>(integer(j["seed"], "config.seed"));
  if (j.contains("output")) {
    check_keys(j["output"], "config.output", {"path", "format"});
    if (j["output"].contains("path")) c.out_path = string(j["output"]["path"], "config.output.path");
    if (j["output"].contains("format")) c.format = string(j["output"]["format"], "config.output.format");
  }
  if (c.format != "csv" && c.format != "json") throw ConfigError("config.output.format: expected 'csv' or 'json'");

  if (j.contains("approach")) {
    try {
      c.approach = parse_approach(string(j["approach"], "config.approach"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.approach: ") + e.what());
    }
  }
  if (j.contains("gap")) {
    const auto g = integer(j["gap"], "config.gap");
    if (g < 0) throw ConfigError("config.gap: must be >= 0");
    c.gap = static_cast<int>(g);
  }
  if (j.contains("trajectory_csv")) {
    const auto& t = j["trajectory_csv"];
    check_keys(t, "config.trajectory_csv", {"path", "length"});
    if (!t.contains("path")) throw ConfigError("config.trajectory_csv.path: missing");
    c.trajectory_csv = string(t["path"], "config.trajectory_csv.path");
    if (t.contains("length")) c.trajectory_length = static_cast<std::size_t>(integer(t["length"], "config.trajectory_csv.length"));
  }
  if (j.contains("lambda")) c.lambdas = numbers(j["lambda"], "config.lambda");
  if (j.contains("reference")) {
    c.reference = string(j["reference"], "config.reference");
    if (c.reference != "alg2" && c.reference != "oracle")
      throw ConfigError("config.reference: expected 'alg2' or 'oracle'");
  }

  // Per-command requirements.
  const auto& cmd = c.command;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config." + what + ": required by command '" + cmd + "'");
  };
  if (cmd == "oracle-k2") {
    need(!c.lambdas.empty(), "lambda");
    need(!c.qs.empty() || !c.alphas.empty(), "q");
    return c;
  }
  if (cmd == "dependent") {
    need(c.chain.has_value(), "chain");
    need(!c.Ks.empty(), "K");
    need(c.n.has_value(), "n");
    need(!c.alphas.empty(), "alpha");
    need(c.coverage_reps > 0, "reps");
    return c;
  }
  need(c.model.has_value(), "model");
  need(!c.Ks.empty(), "K");
  if (cmd == "coverage" || cmd == "k-sweep") {
    need(c.n.has_value(), "n");
    need(!c.alphas.empty(), "alpha");
    need(c.coverage_reps > 0, "reps");
  }
  if (cmd == "coefficient" || cmd == "k-sweep" || cmd == "fixed-n-sweep" || cmd == "compare") {
    need(!c.alphas.empty() || !c.qs.empty(), "alpha");
    need(c.coefficient_reps > 0, "reps");
    if (c.coefficient_reps < 100) throw ConfigError("config.reps: coefficient estimation needs at least 100 reps");
    if (c.sided != Sided::two_sided_symmetric)
      throw ConfigError("config.sided: coefficients are estimated for symmetric two-sided intervals only");
    if (c.algorithm == Algorithm::alg2 || (cmd == "compare" && c.reference == "alg2")) {
      if (cmd != "compare")
        for (Method m : c.methods)
          if (m != Method::batching) throw ConfigError("config.methods: alg2 supports batching only");
      if (!c.dist->chi3.is_zero() || !c.dist->chi4.is_zero())
        throw ConfigError("config.distribution: alg2 needs Gaussian data (zero third and fourth cumulants)");
    }
  }
  if (cmd == "fixed-n-sweep") need(c.N.has_value(), "N");
  if (cmd == "compare" && c.reference == "oracle") {
    for (int K : c.Ks)
      if (K != 2) throw ConfigError("config.K: the closed-form reference exists only for K = 2");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config: JSON parse error: " + std::string(e.what()));
  }
  return parse_config(j, command);
}

}  // namespace batchcov

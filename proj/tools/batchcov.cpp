#include "batchcov/experiment.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <string>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"batchcov: confidence intervals from batching and their n^-1 coverage error"};
  std::string command;
  std::string config_path;
  int workers = 1;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string format;
  bool timing = false;
  bool quiet = false;

  app.add_option("command", command, "coverage | coefficient | oracle-k2 | compare | k-sweep | fixed-n-sweep | dependent")
      ->required()
      ->check(CLI::IsMember(batchcov::known_commands()));
  app.add_option("--config", config_path, "experiment definition (JSON)")->required();
  app.add_option("--workers", workers, "worker threads; results do not depend on this")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_path, "output file (default: config output.path, else stdout)");
  app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_flag("--timing", timing, "fill the wall_seconds column");
  app.add_flag("--quiet", quiet, "no progress messages");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    auto cfg = batchcov::load_config(config_path, command);
    if (seed) cfg.seed = *seed;
    if (!out_path.empty()) cfg.out_path = out_path;
    if (!format.empty()) cfg.format = format;

    batchcov::RunOptions ro;
    ro.workers = workers;
    ro.timing = timing;
    if (!quiet) ro.progress = [](const std::string& s) { std::cerr << "[batchcov] " << s << '\n'; };

    const auto out = batchcov::run_experiment(cfg, ro);
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';

    if (cfg.out_path.empty()) {
      batchcov::write_output(std::cout, out, cfg.format);
    } else {
      std::ofstream f(cfg.out_path);
      if (!f) throw batchcov::ConfigError("output: cannot write '" + cfg.out_path + "'");
      batchcov::write_output(f, out, cfg.format);
    }
  } catch (const batchcov::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const batchcov::NumericGuardError& e) {
    std::cerr << "numeric guard: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

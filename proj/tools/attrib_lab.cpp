#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "attrib/errors.hpp"
#include "attrib/parallel.hpp"
#include "attrib/run_config.hpp"
#include "attrib/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"attrib_lab: training data attribution experiments"};
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> limit;
  app.add_option("--config", config_path, "Run configuration file")->required();
  app.add_option("--out", out_dir, "Output directory (overrides [run] out)");
  app.add_option("--seed", seed, "Global seed (overrides [run] seed)");
  app.add_option("--workers", workers, "Worker threads (default: ATTRIB_LAB_WORKERS or hardware)")
      ->check(CLI::PositiveNumber);
  app.add_option("--limit", limit, "Read at most this many examples")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    attrib::RunConfig config = attrib::load_run_config(config_path);
    if (out_dir) config.out_dir = *out_dir;
    if (seed) config.seed = *seed;
    if (limit) config.data.limit = *limit;
    if (workers) {
      config.workers = *workers;
    } else if (const char* env = std::getenv("ATTRIB_LAB_WORKERS"); env != nullptr && !config.workers) {
      try {
        const long v = std::stol(env);
        if (v <= 0) throw std::invalid_argument("non-positive");
        config.workers = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        std::cerr << "error: ATTRIB_LAB_WORKERS must be a positive integer, got '" << env << "'\n";
        return 2;
      }
    }
    if (config.workers) attrib::set_worker_count(*config.workers);
    const attrib::RunOutcome outcome = attrib::run(config, std::cout, std::cerr);
    std::cerr << "artifacts: " << outcome.directory.string() << '\n';
    return outcome.exit_code;
  } catch (const attrib::ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
}

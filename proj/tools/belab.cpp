#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "belab/runner.hpp"

namespace {

using namespace belab;

int classify(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError& e) {
    std::cerr << "belab: config error: " << e.what() << "\n";
    return cli::BadInput;
  } catch (const DomainError& e) {
    std::cerr << "belab: domain error: " << e.what() << "\n";
    return cli::BadInput;
  } catch (const HypothesisViolation& e) {
    std::cerr << "belab: hypothesis violation: " << e.what() << "\n";
    return cli::Hypothesis;
  } catch (const SolverFailure& e) {
    std::cerr << "belab: solver failure: " << e.what() << "\n";
    return cli::Solver;
  } catch (const std::exception& e) {
    std::cerr << "belab: " << e.what() << "\n";
    return cli::Solver;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"belab: numerical checks for Bakry-Emery comparison geometry"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run the checks named by a TOML config");
  std::string config, out;
  int jobs = 1;
  run->add_option("config", config, "config file")->required();
  run->add_option("--jobs,-j", jobs, "checks run concurrently")->check(CLI::PositiveNumber);
  run->add_option("--out,-o", out, "output directory (overrides output_dir)");

  auto* tables = app.add_subcommand("tables", "model-space CSV table");
  double d = 0.0, lambda = 0.0, r = 0.0;
  int points = 100;
  std::string table_out;
  tables->add_option("--d", d, "model dimension")->required();
  tables->add_option("--lambda", lambda, "model curvature")->required();
  tables->add_option("--r", r, "outer radius of the barrier")->required();
  tables->add_option("--points", points, "rows on (0, r]");
  tables->add_option("--out", table_out, "CSV file (stdout if omitted)");

  auto* horizon = app.add_subcommand("horizon", "topology report for near-horizon data");
  std::string horizon_file;
  bool as_json = false;
  int r_max = 1000;
  horizon->add_option("config", horizon_file, "horizon TOML")->required();
  horizon->add_flag("--json", as_json, "print the JSON record instead of the table");
  horizon->add_option("--r-max", r_max, "largest r in the Betti minimisation")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::BadInput;
  }

  try {
    if (*run) {
      auto rc = cli::load_config(config);
      if (!out.empty()) rc.output_dir = out;
      return cli::run(rc, jobs, std::cout, std::cerr);
    }
    if (*tables) {
      const std::string csv = cli::model_table(d, lambda, r, points);
      if (table_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream f(table_out, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + table_out);
        f << csv;
      }
      return cli::Ok;
    }
    if (*horizon) {
      const auto h = HorizonHypotheses::from_toml(io::parse_file(horizon_file), horizon_file);
      BettiSettings bs;
      bs.r_max = r_max;
      const auto rep = horizon_report(h, bs);
      std::cout << (as_json ? rep.data.dump(2) + "\n" : rep.table);
      return cli::Ok;
    }
  } catch (...) {
    return classify(std::current_exception());
  }
  return cli::Ok;
}

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include <adscft/cli.hpp>

namespace fs = std::filesystem;
using namespace adscft;

namespace {

constexpr int exit_ok = 0, exit_unknown = 1, exit_validation = 2, exit_numerical = 3, exit_budget = 4;

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + p.string() + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AdS scalar field toolkit"};
  std::string command, config, out_dir = "results";
  std::uint64_t seed = 1;
  int threads = 1;
  std::string names;
  for (const auto& [k, v] : cli::commands()) names += (names.empty() ? "" : ", ") + k;
  app.add_option("command", command, "one of: " + names)->required();
  app.add_option("--config", config, "flat key = value config file");
  app.add_option("--seed", seed, "global random seed");
  app.add_option("--out", out_dir, "output directory for <command>.json and <command>.csv");
  app.add_option("--threads", threads, "worker threads for Monte Carlo");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_validation;
  }
  if (!cli::commands().count(command)) {
    std::cerr << "error: unknown command '" << command << "' (expected one of: " << names << ")\n";
    return exit_unknown;
  }
  try {
    cli::RunConfig cfg = config.empty() ? cli::RunConfig{} : cli::RunConfig::load(config);
    cli::RunOutput o;
    cli::json j = cli::run(command, cfg, {seed, threads}, &o);
    j["timestamp"] = utc_now();
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / (command + ".json"), j.dump(2) + "\n");
    write_file(fs::path(out_dir) / (command + ".csv"), o.table.csv());
    std::cout << command << ": " << o.summary << "\n"
              << "wrote " << (fs::path(out_dir) / (command + ".json")).string() << " and .csv\n";
    return exit_ok;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return exit_validation;
  } catch (const BudgetError& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return exit_budget;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return exit_numerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return exit_validation;
  }
}

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tracelab/tracelab.hpp"

namespace fs = std::filesystem;
using namespace tracelab;

namespace {

int run_theory(const ExperimentConfig& c, unsigned workers) {
  std::vector<ScalingPoint> grid;
  for (Index n : c.probe_n) grid.push_back({n, c.probe_d, c.probe_r});
  const auto res = risk_scaling_probe(grid, c.reps, c.master_seed, c.probe_snr, workers);
  fs::create_directories(c.output_dir);
  const fs::path csv = fs::path(c.output_dir) / "probe.csv";
  std::ofstream os(csv, std::ios::binary);
  if (!os) throw IoError("cannot write '" + csv.string() + "'");
  write_probe_csv(os, res);
  std::ofstream cfg(fs::path(c.output_dir) / "config.resolved", std::ios::binary);
  cfg << resolved_text(c) << "config_hash = " << config_hash(c) << '\n';
  write_probe_csv(std::cout, res);
  std::printf("max/min normalized risk: %.4f\n", res.max_min_ratio());
  std::printf("monotonicity violations: %lld\n", static_cast<long long>(res.diagnostics.monotonicity_violations));
  return 0;
}

int cmd_run(const std::string& path, std::optional<unsigned> workers, bool quiet) {
  const auto c = load_config(path);
  validate(c);
  const unsigned w = workers ? *workers : (c.workers ? c.workers : default_workers());
  if (c.mode == ExperimentMode::theory) return run_theory(c, w);
  const auto table = c.mode == ExperimentMode::estimation ? run_estimation_experiment(c, w, !quiet)
                                                          : run_inference_experiment(c, w, !quiet);
  emit_outputs(table, c.output_dir, resolved_text(c));
  write_table_md(std::cout, table);
  Index failed = 0;
  for (const auto& cell : table.cells) failed += cell.failures;
  if (failed) std::cerr << failed << " replication(s) failed; see table.md\n";
  if (table.diagnostics.monotonicity_violations)
    std::cerr << "warning: " << table.diagnostics.monotonicity_violations << " objective increases observed\n";
  std::cerr << "wrote " << (fs::path(c.output_dir) / "table.csv").string() << '\n';
  return 0;
}

int cmd_lemma1(Index instances, std::uint64_t seed, Index d, Index n, Index rank, double snr, unsigned workers) {
  const auto suite = run_lemma1_suite(instances, seed, d, n, rank, snr, workers);
  for (std::size_t k = 0; k < suite.checks.size(); ++k) {
    const auto& c = suite.checks[k];
    if (!c.holds || !c.saturated)
      std::printf("instance %zu: lhs=%.6g rhs=%.6g holds=%d saturated=%d\n", k, c.lhs, c.rhs, c.holds, c.saturated);
  }
  std::printf("holds: %lld/%lld  saturated: %lld/%lld  fit <= truth objective: %lld/%lld\n",
              static_cast<long long>(suite.holds), static_cast<long long>(instances),
              static_cast<long long>(suite.saturated), static_cast<long long>(instances),
              static_cast<long long>(suite.optimal), static_cast<long long>(instances));
  return suite.all_pass() ? 0 : 1;
}

int cmd_plot(const std::string& csv, std::string out) {
  const auto table = load_table_csv(csv);
  if (out.empty()) out = (fs::path(csv).parent_path() / (fs::path(csv).stem().string() + ".svg")).string();
  std::ofstream os(out, std::ios::binary);
  if (!os) throw IoError("cannot write '" + out + "'");
  write_svg_plot(os, table);
  std::cerr << "wrote " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank trace regression: estimators, permutation tests and simulation tables"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  std::string config_path;
  unsigned workers = 0;
  bool quiet = false;
  run->add_option("config", config_path, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
  run->add_option("--workers", workers, "Worker threads (default: TRACELAB_WORKERS or hardware)");
  run->add_flag("--quiet", quiet, "No progress line");

  auto* check = app.add_subcommand("check", "Numerical checks of the theory");
  check->require_subcommand(1);
  auto* lemma1 = check->add_subcommand("lemma1", "Risk bound of the rank-constrained fit on tiny instances");
  Index instances = 100, d = 3, n = 12, rank = 1;
  std::uint64_t seed = 1;
  double snr = 1.0;
  lemma1->add_option("--instances", instances, "Number of random instances")->check(CLI::PositiveNumber);
  lemma1->add_option("--seed", seed, "Master seed");
  lemma1->add_option("--d", d, "d1 = d2")->check(CLI::Range(1, 4));
  lemma1->add_option("--n", n, "Sample size")->check(CLI::Range(1, 30));
  lemma1->add_option("--rank", rank, "r* = r")->check(CLI::PositiveNumber);
  lemma1->add_option("--snr", snr, "Signal-to-noise ratio")->check(CLI::NonNegativeNumber);
  lemma1->add_option("--workers", workers, "Worker threads");

  auto* bound = app.add_subcommand("bound", "Log of the covering-number bound");
  CoveringBoundInput bin;
  bound->add_option("--r", bin.r, "Rank")->required();
  bound->add_option("--d1", bin.d1, "Rows")->required();
  bound->add_option("--d2", bin.d2, "Columns")->required();
  bound->add_option("--n", bin.n, "Sample size")->required();
  bound->add_option("--eps", bin.epsilon, "Covering radius in (0, 1)")->required();

  auto* plot = app.add_subcommand("plot", "SVG plot of a table.csv");
  std::string csv, out;
  plot->add_option("table", csv, "table.csv written by run")->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--output", out, "Output SVG (default: next to the CSV)");

  CLI11_PARSE(app, argc, argv);
  try {
    const std::optional<unsigned> w = workers ? std::optional<unsigned>(workers) : std::nullopt;
    if (*run) return cmd_run(config_path, w, quiet);
    if (*lemma1) return cmd_lemma1(instances, seed, d, n, rank, snr, w ? *w : default_workers());
    if (*bound) {
      const double v = covering_bound_log(bin);
      std::printf("log bound: %.10g\nlog10 bound: %.10g\n", v, v / std::log(10.0));
      return 0;
    }
    if (*plot) return cmd_plot(csv, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

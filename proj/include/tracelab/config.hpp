#ifndef TRACELAB_CONFIG_HPP
#define TRACELAB_CONFIG_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tracelab/datagen.hpp"
#include "tracelab/errors.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/serialization.hpp"

namespace tracelab {

enum class ExperimentMode { estimation, inference, theory };

inline std::string to_string(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::estimation: return "estimation";
    case ExperimentMode::inference: return "inference";
    case ExperimentMode::theory: return "theory";
  }
  return "?";
}

enum class EstimatorKind { ls, ft, am_oracle, am_fixed, nn_oracle, nn_ds, nn_is, nn_os, lasso, l0_oracle, l0_fixed };

/// One table row: "LS", "FT", "AM", "AM-2", "NN", "NN-OR", "NN-DS", "NN-IS",
/// "NN-OS", "lasso", "L0", "L0-2".
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::ls;
  Index param = 0;  // rank for AM-r, sparsity for L0-s
  std::string label;
};

inline EstimatorSpec parse_estimator(const std::string& raw) {
  auto with_param = [&](const std::string& prefix, EstimatorKind kind) -> std::optional<EstimatorSpec> {
    if (raw.rfind(prefix, 0) != 0) return std::nullopt;
    const std::string tail = raw.substr(prefix.size());
    if (tail.empty() || tail.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
    const Index v = std::stol(tail);
    if (v < 1) throw ConfigError("estimator '" + raw + "': parameter must be >= 1");
    return EstimatorSpec{kind, v, raw};
  };
  if (raw == "LS") return {EstimatorKind::ls, 0, raw};
  if (raw == "FT") return {EstimatorKind::ft, 0, raw};
  if (raw == "AM") return {EstimatorKind::am_oracle, 0, raw};
  if (raw == "NN" || raw == "NN-OR") return {EstimatorKind::nn_oracle, 0, raw};
  if (raw == "NN-DS") return {EstimatorKind::nn_ds, 0, raw};
  if (raw == "NN-IS") return {EstimatorKind::nn_is, 0, raw};
  if (raw == "NN-OS") return {EstimatorKind::nn_os, 0, raw};
  if (raw == "lasso") return {EstimatorKind::lasso, 0, raw};
  if (raw == "L0") return {EstimatorKind::l0_oracle, 0, raw};
  if (auto s = with_param("AM-", EstimatorKind::am_fixed)) return *s;
  if (auto s = with_param("L0-", EstimatorKind::l0_fixed)) return *s;
  throw ConfigError("unknown estimator '" + raw + "'");
}

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::estimation;
  DesignKind design{};
  Index n = 200;
  std::vector<Index> ranks{1};
  std::vector<double> snr_grid{1.0};
  Index reps = 100;
  Index n_perms = 19;
  double alpha = 0.05;
  std::vector<EstimatorSpec> estimators{parse_estimator("LS")};
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  double noise_sd = 1.0;

  // Tuning grids.
  /// Empty: AM uses r = r*. Otherwise oracle-tuned over these ranks.
  std::vector<Index> am_rank_grid;
  Index nn_lambda_grid_size = 20;
  double nn_lambda_min_ratio = 1e-3;
  /// Absolute lambdas for permutation tests with the nuclear norm (a fixed
  /// lambda per test keeps the statistic identical across permutations).
  std::vector<double> inference_lambda_grid{0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0, 1.3};
  Index cv_folds = 5;
  double nn_grad_tol = 1e-6;
  Index nn_max_iters = 2000;
  double lasso_lambda = 0.1;

  // Theory mode: risk-scaling probe.
  std::vector<Index> probe_n{100, 200, 400, 800};
  Index probe_d = 10;
  Index probe_r = 1;
  double probe_snr = 25.0;

  /// 0 means "use TRACELAB_WORKERS or the hardware default". Not part of the
  /// resolved config: results never depend on it.
  unsigned workers = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  }
}

inline Index to_int(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789-") != std::string::npos)
    throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
  return std::stol(v);
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += f(xs[i]);
  }
  return out;
}

}  // namespace detail

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// ignored; list values are comma separated; unknown keys are errors.
inline ExperimentConfig parse_config(std::istream& is) {
  using namespace detail;
  ExperimentConfig c;
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  Index p = -1;
  for (const auto& [key, v] : kv) {
    if (key == "mode") {
      if (v == "estimation") c.mode = ExperimentMode::estimation;
      else if (v == "inference") c.mode = ExperimentMode::inference;
      else if (v == "theory") c.mode = ExperimentMode::theory;
      else throw ConfigError("mode must be estimation, inference or theory");
    } else if (key == "design") {
      c.design.variant = parse_design_variant(v);
    } else if (key == "n") {
      c.n = to_int(key, v);
    } else if (key == "d1") {
      c.design.d1 = to_int(key, v);
    } else if (key == "d2") {
      c.design.d2 = to_int(key, v);
    } else if (key == "p") {
      p = to_int(key, v);
    } else if (key == "ranks") {
      c.ranks.clear();
      for (const auto& s : split_list(v)) c.ranks.push_back(to_int(key, s));
    } else if (key == "snr_grid") {
      c.snr_grid.clear();
      for (const auto& s : split_list(v)) c.snr_grid.push_back(to_real(key, s));
    } else if (key == "reps") {
      c.reps = to_int(key, v);
    } else if (key == "n_perms") {
      c.n_perms = to_int(key, v);
    } else if (key == "alpha") {
      c.alpha = to_real(key, v);
    } else if (key == "estimators") {
      c.estimators.clear();
      for (const auto& s : split_list(v)) c.estimators.push_back(parse_estimator(s));
    } else if (key == "master_seed") {
      c.master_seed = static_cast<std::uint64_t>(std::stoull(v));
    } else if (key == "output_dir") {
      c.output_dir = v;
    } else if (key == "noise_sd") {
      c.noise_sd = to_real(key, v);
    } else if (key == "am_rank_grid") {
      c.am_rank_grid.clear();
      for (const auto& s : split_list(v)) c.am_rank_grid.push_back(to_int(key, s));
    } else if (key == "nn_lambda_grid_size") {
      c.nn_lambda_grid_size = to_int(key, v);
    } else if (key == "nn_lambda_min_ratio") {
      c.nn_lambda_min_ratio = to_real(key, v);
    } else if (key == "inference_lambda_grid") {
      c.inference_lambda_grid.clear();
      for (const auto& s : split_list(v)) c.inference_lambda_grid.push_back(to_real(key, s));
    } else if (key == "cv_folds") {
      c.cv_folds = to_int(key, v);
    } else if (key == "nn_grad_tol") {
      c.nn_grad_tol = to_real(key, v);
    } else if (key == "nn_max_iters") {
      c.nn_max_iters = to_int(key, v);
    } else if (key == "lasso_lambda") {
      c.lasso_lambda = to_real(key, v);
    } else if (key == "probe_n") {
      c.probe_n.clear();
      for (const auto& s : split_list(v)) c.probe_n.push_back(to_int(key, s));
    } else if (key == "probe_d") {
      c.probe_d = to_int(key, v);
    } else if (key == "probe_r") {
      c.probe_r = to_int(key, v);
    } else if (key == "probe_snr") {
      c.probe_snr = to_real(key, v);
    } else if (key == "workers") {
      c.workers = static_cast<unsigned>(to_int(key, v));
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  if (c.design.variant == DesignVariant::sparse_linear) {
    if (p > 0) c.design.d1 = p;
    c.design.d2 = 1;
  } else if (p != -1) {
    throw ConfigError("key 'p' only applies to design = sparse_linear");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is);
}

inline void validate(const ExperimentConfig& c) {
  if (c.reps < 1) throw ConfigError("reps must be >= 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (c.n < 1) throw ConfigError("n must be >= 1");
  if (c.design.d1 < 1 || c.design.d2 < 1) throw ConfigError("dimensions must be positive");
  for (double s : c.snr_grid)
    if (!(s >= 0.0)) throw ConfigError("snr_grid values must be nonnegative");
  const Index max_rank = c.design.variant == DesignVariant::sparse_linear ? c.design.d1
                                                                          : std::min(c.design.d1, c.design.d2);
  for (Index r : c.ranks)
    if (r < 0 || r > max_rank) throw ConfigError("ranks must lie in [0, " + std::to_string(max_rank) + "]");
  if (c.design.variant == DesignVariant::matrix_completion && c.n > c.design.d1 * c.design.d2)
    throw ConfigError("matrix completion needs n <= d1*d2");
  if (c.mode == ExperimentMode::inference && c.n_perms < 1) throw ConfigError("n_perms must be >= 1");
  if (c.cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
  if (c.nn_lambda_grid_size < 1) throw ConfigError("nn_lambda_grid_size must be >= 1");
  if (!(c.nn_lambda_min_ratio > 0.0 && c.nn_lambda_min_ratio <= 1.0))
    throw ConfigError("nn_lambda_min_ratio must lie in (0, 1]");
  if (c.estimators.empty() && c.mode != ExperimentMode::theory) throw ConfigError("no estimators configured");
}

/// Canonical text of every result-affecting setting, one `key = value` per line.
inline std::string resolved_text(const ExperimentConfig& c) {
  using detail::join;
  auto num = [](double x) { return format_double(x); };
  auto idx = [](Index x) { return std::to_string(x); };
  std::ostringstream os;
  os << "mode = " << to_string(c.mode) << '\n'
     << "design = " << to_string(c.design.variant) << '\n'
     << "n = " << c.n << '\n'
     << "d1 = " << c.design.d1 << '\n'
     << "d2 = " << c.design.d2 << '\n'
     << "ranks = " << join(c.ranks, idx) << '\n'
     << "snr_grid = " << join(c.snr_grid, num) << '\n'
     << "reps = " << c.reps << '\n'
     << "n_perms = " << c.n_perms << '\n'
     << "alpha = " << num(c.alpha) << '\n'
     << "estimators = " << join(c.estimators, [](const EstimatorSpec& e) { return e.label; }) << '\n'
     << "master_seed = " << c.master_seed << '\n'
     << "output_dir = " << c.output_dir << '\n'
     << "noise_sd = " << num(c.noise_sd) << '\n'
     << "am_rank_grid = " << join(c.am_rank_grid, idx) << '\n'
     << "nn_lambda_grid_size = " << c.nn_lambda_grid_size << '\n'
     << "nn_lambda_min_ratio = " << num(c.nn_lambda_min_ratio) << '\n'
     << "inference_lambda_grid = " << join(c.inference_lambda_grid, num) << '\n'
     << "cv_folds = " << c.cv_folds << '\n'
     << "nn_grad_tol = " << num(c.nn_grad_tol) << '\n'
     << "nn_max_iters = " << c.nn_max_iters << '\n'
     << "lasso_lambda = " << num(c.lasso_lambda) << '\n'
     << "probe_n = " << join(c.probe_n, idx) << '\n'
     << "probe_d = " << c.probe_d << '\n'
     << "probe_r = " << c.probe_r << '\n'
     << "probe_snr = " << num(c.probe_snr) << '\n';
  return os.str();
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(resolved_text(c))));
  return buf;
}

}  // namespace tracelab

#endif  // TRACELAB_CONFIG_HPP

#ifndef TRACELAB_EXPERIMENT_HPP
#define TRACELAB_EXPERIMENT_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tracelab/config.hpp"
#include "tracelab/datagen.hpp"
#include "tracelab/estimators.hpp"
#include "tracelab/ftest.hpp"
#include "tracelab/parallel.hpp"
#include "tracelab/permutation.hpp"

namespace tracelab {

struct ResultCell {
  Index r_star = 0;
  std::string estimator;
  double snr = 0.0;
  double value = 0.0;  // mean risk or rejection rate over the successful reps
  Index reps = 0;      // successful reps
  Index failures = 0;
  std::string tuning;  // selected tuning point, empty if untuned
  std::vector<double> raw;

  bool valid() const { return failures == 0 && reps > 0; }
};

struct ResultTable {
  ExperimentMode mode = ExperimentMode::estimation;
  std::vector<Index> ranks;
  std::vector<std::string> estimators;
  std::vector<double> snrs;
  std::vector<ResultCell> cells;  // r* major, then estimator, then SNR
  std::string config_hash;
  SolverDiagnostics diagnostics;

  const ResultCell& at(Index r_star, const std::string& estimator, double snr) const {
    for (const auto& c : cells)
      if (c.r_star == r_star && c.estimator == estimator && c.snr == snr) return c;
    throw PreconditionError("ResultTable: no cell (" + std::to_string(r_star) + ", " + estimator + ", " +
                            format_double(snr) + ")");
  }
};

// ---------------------------------------------------------------------------
// Cross-validation for the nuclear-norm penalty
// ---------------------------------------------------------------------------

struct CvResult {
  std::vector<double> lambdas;
  std::vector<Index> fold_of;  // fold label of each observation
  MatrixXd fold_errors;        // folds x grid, held-out sum of squares
  MatrixXd oof_predictions;    // n x grid, each prediction from the fit without its fold
  Index best = 0;

  double lambda() const { return lambdas[static_cast<std::size_t>(best)]; }

  /// Grid index minimizing fold k's held-out error.
  Index best_for_fold(Index k) const { return pick(fold_errors.row(k).transpose()); }

  /// Smallest error; ties go to the larger lambda.
  Index pick(const VectorXd& err) const {
    Index b = 0;
    for (Index j = 1; j < err.size(); ++j) {
      const double lj = lambdas[static_cast<std::size_t>(j)], lb = lambdas[static_cast<std::size_t>(b)];
      if (err[j] < err[b] || (err[j] == err[b] && lj > lb)) b = j;
    }
    return b;
  }
};

inline std::vector<Index> assign_folds(Index n, Index folds, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Engine rng = make_engine(seed, {stream_key("folds")});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> fold_of(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k % folds;
  return fold_of;
}

inline CvResult cross_validate(const TraceRegressionDataset& data, Index folds, const std::vector<double>& grid,
                               std::uint64_t seed = 0, NnConfig base = {}) {
  const Index n = data.size();
  if (folds < 2) throw ConfigError("cross_validate: folds must be >= 2");
  if (grid.empty()) throw ConfigError("cross_validate: empty lambda grid");
  const Index largest_fold = (n + folds - 1) / folds;
  if (n < folds || n - largest_fold < 2)
    throw ConfigError("cross_validate: " + std::to_string(n) + " observations are too few for " +
                      std::to_string(folds) + " folds");
  CvResult out;
  out.lambdas = grid;
  out.fold_of = assign_folds(n, folds, seed);
  const Index g = static_cast<Index>(grid.size());
  out.fold_errors = MatrixXd::Zero(folds, g);
  out.oof_predictions = MatrixXd::Zero(n, g);
  for (Index k = 0; k < folds; ++k) {
    std::vector<Index> train, test;
    for (Index i = 0; i < n; ++i) (out.fold_of[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
    const auto fits = fit_nn_path(data.subset(train), grid, base);
    const auto held = data.subset(test);
    for (Index j = 0; j < g; ++j) {
      const VectorXd pred = held.predict(fits[static_cast<std::size_t>(j)].estimate.values());
      out.fold_errors(k, j) = (held.responses() - pred).squaredNorm();
      for (std::size_t t = 0; t < test.size(); ++t) out.oof_predictions(test[t], j) = pred[static_cast<Index>(t)];
    }
  }
  out.best = out.pick(out.fold_errors.colwise().sum().transpose());
  return out;
}

/// Grid lambda minimizing out-of-fold squared prediction error.
inline double cross_validate_lambda(const TraceRegressionDataset& data, Index folds,
                                    const std::vector<double>& grid, std::uint64_t seed = 0, NnConfig base = {}) {
  if (grid.size() == 1) {
    if (folds < 2) throw ConfigError("cross_validate: folds must be >= 2");
    return grid.front();
  }
  return cross_validate(data, folds, grid, seed, base).lambda();
}

/// Statistic for the in-sample variant: select lambda by CV on the data it is
/// given, refit on all of it.
inline PermutationEstimator nn_cv_in_sample_statistic(NnConfig cfg, Index folds, std::vector<double> grid,
                                                      std::uint64_t seed) {
  return [=](const TraceRegressionDataset& d) {
    NnConfig c = cfg;
    c.lambda = cross_validate_lambda(d, folds, grid, seed, cfg);
    auto fit = fit_nn(d, c);
    return EstimatorOutput{d.predict(fit.estimate.values()), fit.diagnostics};
  };
}

/// Statistic for the out-of-sample variant: each fold picks its own lambda and
/// the statistic uses the out-of-fold predictions.
inline PermutationEstimator nn_cv_out_of_sample_statistic(NnConfig cfg, Index folds, std::vector<double> grid,
                                                          std::uint64_t seed) {
  return [=](const TraceRegressionDataset& d) {
    const auto cv = cross_validate(d, folds, grid, seed, cfg);
    VectorXd fitted(d.size());
    std::vector<Index> choice(static_cast<std::size_t>(folds));
    for (Index k = 0; k < folds; ++k) choice[static_cast<std::size_t>(k)] = cv.best_for_fold(k);
    for (Index i = 0; i < d.size(); ++i)
      fitted[i] = cv.oof_predictions(i, choice[static_cast<std::size_t>(cv.fold_of[static_cast<std::size_t>(i)])]);
    return EstimatorOutput{fitted, {}};
  };
}

// ---------------------------------------------------------------------------
// Replication plumbing
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> log_grid(double lo, double hi, Index size) {
  std::vector<double> g(static_cast<std::size_t>(size));
  if (size == 1) {
    g[0] = hi;
    return g;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (Index k = 0; k < size; ++k)
    g[static_cast<std::size_t>(k)] = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(size - 1));
  return g;
}

inline std::uint64_t rep_seed(const ExperimentConfig& c, Index r_star, double snr, Index rep) {
  return substream_seed(c.master_seed, {stream_key("rep"), static_cast<std::uint64_t>(r_star),
                                        std::bit_cast<std::uint64_t>(snr), static_cast<std::uint64_t>(rep)});
}

struct RepSample {
  TraceRegressionDataset data;
  std::optional<SparseLinearSample> sparse;
  std::uint64_t seed = 0;
};

inline RepSample draw_rep(const ExperimentConfig& c, Index r_star, double snr, Index rep) {
  const std::uint64_t seed = rep_seed(c, r_star, snr, rep);
  if (c.design.variant == DesignVariant::sparse_linear) {
    auto s = gen_sparse_linear(c.design.d1, r_star, snr, c.n, substream_seed(seed, {1}), c.noise_sd);
    auto data = as_trace_dataset(s, c.noise_sd);
    return RepSample{std::move(data), std::move(s), seed};
  }
  auto data = gen_dataset(c.design, SignalSpec{r_star, snr, substream_seed(seed, {1})}, c.n, c.noise_sd,
                          substream_seed(seed, {2}));
  return RepSample{std::move(data), std::nullopt, seed};
}

/// Per-rep output of one estimator: one value per tuning point.
struct Outcome {
  std::vector<double> values;
  std::string error;
  SolverDiagnostics diagnostics;
};

inline MatrixXd support_columns(const MatrixXd& x, const std::vector<Index>& support) {
  MatrixXd out(x.rows(), static_cast<Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) out.col(static_cast<Index>(k)) = x.col(support[k]);
  return out;
}

inline double sparse_risk(const SparseLinearSample& s, const VectorXd& beta) {
  return (s.x * (beta - s.beta_star)).squaredNorm() / static_cast<double>(s.x.rows());
}

inline NnConfig nn_base(const ExperimentConfig& c) {
  NnConfig cfg;
  cfg.grad_tol = c.nn_grad_tol;
  cfg.max_iters = c.nn_max_iters;
  return cfg;
}

inline MatrixXd sparse_x(const TraceRegressionDataset& d) { return d.designs().stacked().transpose(); }

inline Index oracle_rank(Index r_star) { return std::max<Index>(r_star, 1); }

inline std::vector<std::string> tuning_labels(const ExperimentConfig& c, const EstimatorSpec& e) {
  std::vector<std::string> out;
  switch (e.kind) {
    case EstimatorKind::am_oracle:
      if (c.mode == ExperimentMode::estimation && !c.am_rank_grid.empty())
        for (Index r : c.am_rank_grid) out.push_back("r=" + std::to_string(r));
      break;
    case EstimatorKind::nn_oracle:
    case EstimatorKind::lasso:
      if (c.mode == ExperimentMode::estimation) {
        for (double x : log_grid(c.nn_lambda_min_ratio, 1.0, c.nn_lambda_grid_size))
          out.push_back("lambda/lambda_max=" + format_double(x));
      } else if (e.kind == EstimatorKind::nn_oracle) {
        for (double x : c.inference_lambda_grid) out.push_back("lambda=" + format_double(x));
      }
      break;
    case EstimatorKind::l0_oracle:
      if (c.mode == ExperimentMode::estimation)
        for (Index s = 1; s <= std::min<Index>(3, c.design.d1); ++s) out.push_back("s=" + std::to_string(s));
      break;
    default:
      break;
  }
  return out;
}

// Estimation: one in-sample risk per tuning point.
inline std::vector<double> estimate_risks(const ExperimentConfig& c, const EstimatorSpec& e, const RepSample& s,
                                          Index r_star, SolverDiagnostics& diag) {
  const auto& data = s.data;
  if (s.sparse) {
    const auto& sp = *s.sparse;
    switch (e.kind) {
      case EstimatorKind::ls: {
        VectorXd beta = VectorXd::Zero(sp.x.cols());
        if (!sp.support.empty()) {
          const auto sol = least_squares(support_columns(sp.x, sp.support), sp.y);
          for (std::size_t k = 0; k < sp.support.size(); ++k) beta[sp.support[k]] = sol.coef[static_cast<Index>(k)];
        }
        return {sparse_risk(sp, beta)};
      }
      case EstimatorKind::lasso: {
        const double lmax = 2.0 * (sp.x.transpose() * sp.y).cwiseAbs().maxCoeff() / static_cast<double>(sp.x.rows());
        std::vector<double> out;
        for (double ratio : log_grid(c.nn_lambda_min_ratio, 1.0, c.nn_lambda_grid_size)) {
          SparseConfig sc;
          sc.lambda = ratio * lmax;
          out.push_back(sparse_risk(sp, fit_lasso(sp.x, sp.y, sc)));
        }
        return out;
      }
      case EstimatorKind::l0_oracle:
      case EstimatorKind::l0_fixed: {
        std::vector<Index> sizes;
        if (e.kind == EstimatorKind::l0_fixed) sizes.push_back(e.param);
        else
          for (Index k = 1; k <= std::min<Index>(3, sp.x.cols()); ++k) sizes.push_back(k);
        std::vector<double> out;
        for (Index k : sizes) {
          SparseConfig sc;
          sc.sparsity = k;
          out.push_back(sparse_risk(sp, fit_l0(sp.x, sp.y, sc)));
        }
        return out;
      }
      default:
        throw ConfigError("estimator " + e.label + " is not available for the sparse linear design");
    }
  }
  switch (e.kind) {
    case EstimatorKind::ls: {
      const MatrixXd& v = *data.oracle_right_factor();
      if (v.cols() == 0) return {in_sample_risk(MatrixXd(MatrixXd::Zero(data.d1(), data.d2())), data)};
      auto fit = fit_oracle_ls(data, v);
      diag += fit.diagnostics;
      return {in_sample_risk(fit.estimate, data)};
    }
    case EstimatorKind::am_oracle:
    case EstimatorKind::am_fixed: {
      std::vector<Index> ranks;
      if (e.kind == EstimatorKind::am_fixed) ranks.push_back(e.param);
      else if (c.am_rank_grid.empty()) ranks.push_back(oracle_rank(r_star));
      else ranks = c.am_rank_grid;
      AmConfig cfg;
      const Index rmax = *std::max_element(ranks.begin(), ranks.end());
      const auto starts = resolve_am_starts(data, cfg.restarts, rmax, cfg.warm_start_nn);
      diag += starts.diagnostics;
      std::vector<double> out;
      for (Index r : ranks) {
        cfg.rank = r;
        auto fit = fit_am(data, cfg, &starts);
        diag += fit.diagnostics;
        out.push_back(in_sample_risk(fit.estimate, data));
      }
      return out;
    }
    case EstimatorKind::nn_oracle: {
      const double lmax = nn_lambda_max(data);
      std::vector<double> lambdas;
      for (double ratio : log_grid(c.nn_lambda_min_ratio, 1.0, c.nn_lambda_grid_size)) lambdas.push_back(ratio * lmax);
      const auto fits = fit_nn_path(data, lambdas, nn_base(c));
      std::vector<double> out;
      for (const auto& f : fits) {
        diag += f.diagnostics;
        out.push_back(in_sample_risk(f.estimate, data));
      }
      return out;
    }
    default:
      throw ConfigError("estimator " + e.label + " is not available in estimation mode");
  }
}

// Inference: one rejection indicator (0 or 1) per tuning point.
inline std::vector<double> run_tests(const ExperimentConfig& c, const EstimatorSpec& e, const RepSample& s,
                                     Index r_star, const std::vector<PermutationSpec>& perms,
                                     SolverDiagnostics& diag) {
  const auto& data = s.data;
  auto decide = [&](const PermutationEstimator& est, const TraceRegressionDataset& d,
                    const std::vector<PermutationSpec>& ps) {
    const auto rep = run_permutation_test(d, est, ps, c.alpha, 1);
    diag += rep.diagnostics;
    return rep.reject ? 1.0 : 0.0;
  };
  if (s.sparse) {
    const auto& sp = *s.sparse;
    const std::vector<Index> support = sp.support;
    switch (e.kind) {
      case EstimatorKind::ft:
        return {f_test(support_columns(sp.x, support), sp.y).p_value <= c.alpha ? 1.0 : 0.0};
      case EstimatorKind::ls:
        return {decide(
            [support](const TraceRegressionDataset& d) {
              const MatrixXd xs = support_columns(sparse_x(d), support);
              return EstimatorOutput{xs * least_squares(xs, d.responses()).coef, {}};
            },
            data, perms)};
      case EstimatorKind::lasso: {
        SparseConfig sc;
        sc.lambda = c.lasso_lambda;
        return {decide(
            [sc](const TraceRegressionDataset& d) {
              const MatrixXd x = sparse_x(d);
              return EstimatorOutput{x * fit_lasso(x, d.responses(), sc), {}};
            },
            data, perms)};
      }
      case EstimatorKind::l0_oracle:
      case EstimatorKind::l0_fixed: {
        SparseConfig sc;
        sc.sparsity = e.kind == EstimatorKind::l0_fixed ? e.param : oracle_rank(r_star);
        return {decide(
            [sc](const TraceRegressionDataset& d) {
              const MatrixXd x = sparse_x(d);
              return EstimatorOutput{x * fit_l0(x, d.responses(), sc), {}};
            },
            data, perms)};
      }
      default:
        throw ConfigError("test " + e.label + " is not available for the sparse linear design");
    }
  }
  const MatrixXd& v_star = *data.oracle_right_factor();
  const NnConfig base = nn_base(c);
  switch (e.kind) {
    case EstimatorKind::ft:
      return {oracle_f_test(data, v_star).p_value <= c.alpha ? 1.0 : 0.0};
    case EstimatorKind::ls:
      return {decide(oracle_ls_statistic(v_star), data, perms)};
    case EstimatorKind::am_oracle:
    case EstimatorKind::am_fixed: {
      AmConfig cfg;
      cfg.rank = e.kind == EstimatorKind::am_fixed ? e.param : oracle_rank(r_star);
      return {decide(am_statistic(cfg), data, perms)};
    }
    case EstimatorKind::nn_oracle: {
      std::vector<double> out;
      for (double l : c.inference_lambda_grid) {
        NnConfig cfg = base;
        cfg.lambda = l;
        out.push_back(decide(nn_statistic(cfg), data, perms));
      }
      return out;
    }
    case EstimatorKind::nn_ds: {
      std::vector<Index> order(static_cast<std::size_t>(data.size()));
      std::iota(order.begin(), order.end(), Index{0});
      Engine rng = make_engine(s.seed, {stream_key("split")});
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t half = order.size() / 2;
      std::vector<Index> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
      std::vector<Index> second(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
      std::sort(first.begin(), first.end());
      std::sort(second.begin(), second.end());
      NnConfig cfg = base;
      cfg.lambda = cross_validate_lambda(data.subset(first), c.cv_folds, c.inference_lambda_grid,
                                         substream_seed(s.seed, {stream_key("cv")}), base);
      const auto test_half = data.subset(second);
      const auto ps = sample_permutations(test_half.size(), c.n_perms, substream_seed(s.seed, {stream_key("ds")}));
      return {decide(nn_statistic(cfg), test_half, ps)};
    }
    case EstimatorKind::nn_is:
      return {decide(nn_cv_in_sample_statistic(base, c.cv_folds, c.inference_lambda_grid,
                                               substream_seed(s.seed, {stream_key("cv")})),
                     data, perms)};
    case EstimatorKind::nn_os:
      return {decide(nn_cv_out_of_sample_statistic(base, c.cv_folds, c.inference_lambda_grid,
                                                   substream_seed(s.seed, {stream_key("cv")})),
                     data, perms)};
    default:
      throw ConfigError("test " + e.label + " is not available in inference mode");
  }
}

/// Null-rejection ceiling for the oracle-lambda screen: floor(reps*alpha + 2 binomial SEs).
inline Index screen_ceiling(Index reps, double alpha) {
  const double r = static_cast<double>(reps);
  return static_cast<Index>(std::floor(r * alpha + 2.0 * std::sqrt(r * alpha * (1.0 - alpha)) + 1e-9));
}

inline void check_estimators(const ExperimentConfig& c) {
  const bool sparse = c.design.variant == DesignVariant::sparse_linear;
  for (const auto& e : c.estimators) {
    const auto k = e.kind;
    const bool sparse_only = k == EstimatorKind::lasso || k == EstimatorKind::l0_oracle || k == EstimatorKind::l0_fixed;
    const bool matrix_only = k == EstimatorKind::am_oracle || k == EstimatorKind::am_fixed ||
                             k == EstimatorKind::nn_oracle || k == EstimatorKind::nn_ds ||
                             k == EstimatorKind::nn_is || k == EstimatorKind::nn_os;
    if (sparse && matrix_only) throw ConfigError(e.label + " needs a matrix design");
    if (!sparse && sparse_only) throw ConfigError(e.label + " needs design = sparse_linear");
    if (c.mode == ExperimentMode::estimation &&
        (k == EstimatorKind::ft || k == EstimatorKind::nn_ds || k == EstimatorKind::nn_is || k == EstimatorKind::nn_os))
      throw ConfigError(e.label + " is a test, not available in estimation mode");
    if (k == EstimatorKind::am_fixed && e.param > std::min(c.design.d1, c.design.d2))
      throw ConfigError(e.label + ": rank exceeds min(d1, d2)");
    if (k == EstimatorKind::l0_fixed && e.param > 3) throw ConfigError(e.label + ": best subset is limited to s <= 3");
  }
  if (c.mode == ExperimentMode::inference)
    for (Index r : c.ranks)
      if (r < 1) throw ConfigError("inference needs every r* >= 1 (oracle tests use V*)");
  if (c.mode == ExperimentMode::estimation)
    for (Index r : c.am_rank_grid)
      if (r < 1 || r > std::min(c.design.d1, c.design.d2)) throw ConfigError("am_rank_grid entries must lie in [1, min(d1, d2)]");
  if (c.mode == ExperimentMode::inference && c.inference_lambda_grid.empty())
    for (const auto& e : c.estimators)
      if (e.kind == EstimatorKind::nn_oracle || e.kind == EstimatorKind::nn_ds || e.kind == EstimatorKind::nn_is ||
          e.kind == EstimatorKind::nn_os)
        throw ConfigError("inference_lambda_grid is empty");
}

struct Progress {
  bool enabled = false;
  std::size_t total = 0, done = 0;
  void tick(const std::string& what) {
    ++done;
    if (enabled) std::cerr << "\r[" << done << "/" << total << "] " << what << "          " << std::flush;
    if (enabled && done == total) std::cerr << '\n';
  }
};

/// Runs every (r*, SNR) cell; `run_one` returns one Outcome per estimator.
template <class RunOne>
std::vector<std::vector<std::vector<Outcome>>> run_cells(const ExperimentConfig& c, unsigned workers,
                                                         Progress& progress, RunOne&& run_one) {
  // [rank][snr][rep * n_est + est]
  std::vector<std::vector<std::vector<Outcome>>> all(c.ranks.size());
  const std::size_t n_est = c.estimators.size();
  for (std::size_t ri = 0; ri < c.ranks.size(); ++ri) {
    all[ri].resize(c.snr_grid.size());
    for (std::size_t si = 0; si < c.snr_grid.size(); ++si) {
      auto& slot = all[ri][si];
      slot.resize(static_cast<std::size_t>(c.reps) * n_est);
      parallel_for(static_cast<std::size_t>(c.reps), workers, [&](std::size_t rep) {
        const auto sample = draw_rep(c, c.ranks[ri], c.snr_grid[si], static_cast<Index>(rep));
        for (std::size_t e = 0; e < n_est; ++e) {
          auto& out = slot[rep * n_est + e];
          try {
            out.values = run_one(c.estimators[e], sample, c.ranks[ri], out.diagnostics);
            for (double v : out.values)
              if (!std::isfinite(v)) throw EstimatorError("non-finite value");
          } catch (const ConfigError&) {
            throw;
          } catch (const std::exception& ex) {
            out.values.clear();
            out.error = ex.what();
          }
        }
      });
      progress.tick("r*=" + std::to_string(c.ranks[ri]) + " snr=" + format_double(c.snr_grid[si]));
    }
  }
  return all;
}

/// Mean per tuning point over the successful reps.
inline std::vector<double> tuning_means(const std::vector<Outcome>& slot, std::size_t n_est, std::size_t e,
                                        Index reps, std::size_t points, Index& ok) {
  std::vector<double> sum(points, 0.0);
  ok = 0;
  for (Index k = 0; k < reps; ++k) {
    const auto& o = slot[static_cast<std::size_t>(k) * n_est + e];
    if (o.values.size() != points) continue;
    ++ok;
    for (std::size_t j = 0; j < points; ++j) sum[j] += o.values[j];
  }
  for (auto& s : sum) s = ok ? s / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN();
  return sum;
}

inline ResultCell make_cell(const ExperimentConfig& c, const std::vector<Outcome>& slot, std::size_t e, Index r_star,
                            double snr, std::size_t choice, const std::vector<std::string>& labels) {
  const std::size_t n_est = c.estimators.size();
  ResultCell cell;
  cell.r_star = r_star;
  cell.estimator = c.estimators[e].label;
  cell.snr = snr;
  if (!labels.empty()) cell.tuning = labels[choice];
  double sum = 0.0;
  for (Index k = 0; k < c.reps; ++k) {
    const auto& o = slot[static_cast<std::size_t>(k) * n_est + e];
    if (o.values.empty()) {
      ++cell.failures;
      continue;
    }
    cell.raw.push_back(o.values[choice]);
    sum += o.values[choice];
    ++cell.reps;
  }
  cell.value = cell.reps ? sum / static_cast<double>(cell.reps) : std::numeric_limits<double>::quiet_NaN();
  return cell;
}

inline ResultTable empty_table(const ExperimentConfig& c) {
  ResultTable t;
  t.mode = c.mode;
  t.ranks = c.ranks;
  for (const auto& e : c.estimators) t.estimators.push_back(e.label);
  t.snrs = c.snr_grid;
  t.config_hash = config_hash(c);
  return t;
}

inline unsigned resolve_workers(const ExperimentConfig& c, std::optional<unsigned> workers) {
  if (workers) return std::max(1u, *workers);
  if (c.workers > 0) return c.workers;
  return default_workers();
}

}  // namespace detail

/// Mean in-sample risk per (r*, estimator, SNR). Tuned estimators keep the grid
/// point with the smallest mean risk in each cell.
inline ResultTable run_estimation_experiment(const ExperimentConfig& c, std::optional<unsigned> workers = std::nullopt,
                                             bool progress = false) {
  if (c.mode != ExperimentMode::estimation) throw ConfigError("run_estimation_experiment: mode must be estimation");
  validate(c);
  detail::check_estimators(c);
  detail::Progress prog{progress, c.ranks.size() * c.snr_grid.size(), 0};
  const auto all = detail::run_cells(c, detail::resolve_workers(c, workers), prog,
                                     [&](const EstimatorSpec& e, const detail::RepSample& s, Index r_star,
                                         SolverDiagnostics& diag) { return detail::estimate_risks(c, e, s, r_star, diag); });
  ResultTable t = detail::empty_table(c);
  const std::size_t n_est = c.estimators.size();
  for (std::size_t ri = 0; ri < c.ranks.size(); ++ri)
    for (std::size_t e = 0; e < n_est; ++e) {
      const auto labels = detail::tuning_labels(c, c.estimators[e]);
      for (std::size_t si = 0; si < c.snr_grid.size(); ++si) {
        const auto& slot = all[ri][si];
        Index ok = 0;
        const auto means = detail::tuning_means(slot, n_est, e, c.reps, std::max<std::size_t>(labels.size(), 1), ok);
        std::size_t choice = 0;
        for (std::size_t j = 1; j < means.size(); ++j)
          if (means[j] < means[choice]) choice = j;
        t.cells.push_back(detail::make_cell(c, slot, e, c.ranks[ri], c.snr_grid[si], choice, labels));
      }
    }
  for (const auto& per_rank : all)
    for (const auto& slot : per_rank)
      for (const auto& o : slot) t.diagnostics += o.diagnostics;
  return t;
}

/// Rejection rate per (r*, test, SNR). NN-OR keeps, per r*, the lambdas whose
/// SNR = 0 rejection count is within floor(reps*alpha + 2 SE), then reports the
/// most powerful of those in each cell.
inline ResultTable run_inference_experiment(const ExperimentConfig& c, std::optional<unsigned> workers = std::nullopt,
                                            bool progress = false) {
  if (c.mode != ExperimentMode::inference) throw ConfigError("run_inference_experiment: mode must be inference");
  validate(c);
  detail::check_estimators(c);
  detail::Progress prog{progress, c.ranks.size() * c.snr_grid.size(), 0};
  const auto all = detail::run_cells(
      c, detail::resolve_workers(c, workers), prog,
      [&](const EstimatorSpec& e, const detail::RepSample& s, Index r_star, SolverDiagnostics& diag) {
        const auto perms = sample_permutations(s.data.size(), c.n_perms, substream_seed(s.seed, {stream_key("perms")}));
        return detail::run_tests(c, e, s, r_star, perms, diag);
      });
  ResultTable t = detail::empty_table(c);
  const std::size_t n_est = c.estimators.size();
  const auto zero = std::find(c.snr_grid.begin(), c.snr_grid.end(), 0.0);
  const Index ceiling = detail::screen_ceiling(c.reps, c.alpha);
  for (std::size_t ri = 0; ri < c.ranks.size(); ++ri)
    for (std::size_t e = 0; e < n_est; ++e) {
      const auto labels = detail::tuning_labels(c, c.estimators[e]);
      const std::size_t points = std::max<std::size_t>(labels.size(), 1);
      std::vector<bool> admissible(points, true);
      if (points > 1 && zero != c.snr_grid.end()) {
        Index ok = 0;
        const auto null_rates =
            detail::tuning_means(all[ri][static_cast<std::size_t>(zero - c.snr_grid.begin())], n_est, e, c.reps, points, ok);
        bool any = false;
        for (std::size_t j = 0; j < points; ++j) {
          admissible[j] = std::llround(null_rates[j] * static_cast<double>(ok)) <= ceiling;
          any = any || admissible[j];
        }
        if (!any) {
          // Nothing passes: keep the lambda with the fewest null rejections.
          const auto best = std::min_element(null_rates.begin(), null_rates.end()) - null_rates.begin();
          admissible.assign(points, false);
          admissible[static_cast<std::size_t>(best)] = true;
        }
      }
      for (std::size_t si = 0; si < c.snr_grid.size(); ++si) {
        const auto& slot = all[ri][si];
        Index ok = 0;
        const auto rates = detail::tuning_means(slot, n_est, e, c.reps, points, ok);
        std::size_t choice = points;
        for (std::size_t j = 0; j < points; ++j)
          if (admissible[j] && (choice == points || rates[j] > rates[choice])) choice = j;
        t.cells.push_back(detail::make_cell(c, slot, e, c.ranks[ri], c.snr_grid[si], choice, labels));
      }
    }
  for (const auto& per_rank : all)
    for (const auto& slot : per_rank)
      for (const auto& o : slot) t.diagnostics += o.diagnostics;
  return t;
}

}  // namespace tracelab

#endif  // TRACELAB_EXPERIMENT_HPP

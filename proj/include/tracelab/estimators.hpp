#ifndef TRACELAB_ESTIMATORS_HPP
#define TRACELAB_ESTIMATORS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tracelab/datagen.hpp"
#include "tracelab/errors.hpp"
#include "tracelab/linalg.hpp"
#include "tracelab/model.hpp"
#include "tracelab/rng.hpp"

namespace tracelab {

/// Counters accumulated by the iterative solvers.
struct SolverDiagnostics {
  std::uint64_t fits = 0;
  std::uint64_t iterations_checked = 0;
  std::uint64_t monotonicity_violations = 0;
  std::uint64_t rank_deficient_solves = 0;

  SolverDiagnostics& operator+=(const SolverDiagnostics& o) {
    fits += o.fits;
    iterations_checked += o.iterations_checked;
    monotonicity_violations += o.monotonicity_violations;
    rank_deficient_solves += o.rank_deficient_solves;
    return *this;
  }
};

struct FitResult {
  CoefficientMatrix estimate;
  /// Sum of squared residuals; for the nuclear-norm fit, (1/n) SSR + lambda ||Theta||_*.
  double objective = 0.0;
  Index iterations = 0;
  bool converged = false;
  std::optional<Index> restart_index;
  std::vector<double> restart_objectives;
  SolverDiagnostics diagnostics;
};

// Floating-point slack for "nonincreasing": exact least-squares steps can
// still move the objective up by rounding.
inline bool objective_increased(double before, double after) {
  return after > before + 1e-10 * std::abs(before) + 1e-14;
}

// ---------------------------------------------------------------------------
// Nuclear-norm regularized least squares
// ---------------------------------------------------------------------------

enum class StepRule { fixed, backtracking };

struct NnConfig {
  double lambda = 0.0;
  Index max_iters = 2000;
  double grad_tol = 1e-8;
  StepRule step_rule = StepRule::backtracking;
  /// Monotone accelerated proximal gradient (keeps the objective nonincreasing).
  bool accelerate = true;
};

/// 2 ||(1/n) sum_i y_i X_i||_op: the smallest lambda with Theta = 0 optimal.
inline double nn_lambda_max(const TraceRegressionDataset& data) {
  const double n = static_cast<double>(data.size());
  return 2.0 * operator_norm(data.designs().adjoint(data.responses()) / n);
}

/// Gradient of (1/n) sum_i (y_i - <X_i, Theta>)^2.
inline MatrixXd nn_smooth_gradient(const TraceRegressionDataset& data, const MatrixXd& theta) {
  const double n = static_cast<double>(data.size());
  const VectorXd resid = data.predict(theta) - data.responses();
  return data.designs().adjoint(resid) * (2.0 / n);
}

inline double nn_objective(const TraceRegressionDataset& data, const MatrixXd& theta, double lambda) {
  const double n = static_cast<double>(data.size());
  return (data.responses() - data.predict(theta)).squaredNorm() / n + lambda * nuclear_norm(theta);
}

namespace detail {

struct ProxPoint {
  MatrixXd theta;
  double nuclear = 0.0;
};

// Singular values above tau come from the symmetric eigenproblem of the
// smaller Gram matrix, which is several times cheaper than a bidiagonal SVD
// at these sizes. Only the kept directions are formed, and they are well
// separated from zero when tau is not tiny; otherwise fall back to the SVD.
inline ProxPoint nuclear_prox(const MatrixXd& m, double tau) {
  const bool wide = m.cols() > m.rows();
  const MatrixXd gram = wide ? MatrixXd(m * m.transpose()) : MatrixXd(m.transpose() * m);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
  const VectorXd& ev = es.eigenvalues();  // ascending
  const double top = std::sqrt(std::max(0.0, ev[ev.size() - 1]));
  if (tau <= 1e-6 * top) {
    Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    VectorXd s = (svd.singularValues().array() - tau).max(0.0).matrix();
    return {svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose(), s.sum()};
  }
  ProxPoint out{MatrixXd::Zero(m.rows(), m.cols()), 0.0};
  for (Index k = ev.size() - 1; k >= 0; --k) {
    const double sigma = std::sqrt(std::max(0.0, ev[k]));
    if (sigma <= tau) break;
    const VectorXd w = es.eigenvectors().col(k);
    const double shrink = (sigma - tau) / sigma;
    // m w = sigma * (other-side singular vector)
    if (wide) {
      out.theta.noalias() += shrink * w * (m.transpose() * w).transpose();
    } else {
      out.theta.noalias() += shrink * (m * w) * w.transpose();
    }
    out.nuclear += sigma - tau;
  }
  return out;
}

}  // namespace detail

/// Minimizes (1/n) sum (y_i - <X_i, Theta>)^2 + lambda ||Theta||_* by proximal gradient.
///
/// The step starts at 1/L for the Lipschitz constant L of the smooth part and is
/// halved until the quadratic upper bound holds. converged means the
/// gradient-mapping norm fell below grad_tol.
inline FitResult fit_nn(const TraceRegressionDataset& data, const NnConfig& cfg,
                        const std::optional<MatrixXd>& warm_start = std::nullopt) {
  if (!(cfg.lambda >= 0.0)) throw PreconditionError("fit_nn: lambda must be >= 0");
  if (cfg.max_iters < 1) throw PreconditionError("fit_nn: max_iters must be positive");
  const DesignStack& ds = data.designs();
  const Index d1 = data.d1(), d2 = data.d2();
  const double n = static_cast<double>(data.size());
  const VectorXd& y = data.responses();
  const double lipschitz = 2.0 * ds.gram_top_eigenvalue();
  double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;

  MatrixXd x = warm_start ? *warm_start : MatrixXd::Zero(d1, d2);
  ds.check_shape(x);
  VectorXd pred_x = ds.apply(x);
  double fx = (pred_x - y).squaredNorm() / n + cfg.lambda * nuclear_norm(x);

  FitResult out;
  out.diagnostics.fits = 1;
  MatrixXd yk = x, x_prev = x;
  VectorXd pred_y = pred_x;
  double t = 1.0;
  for (Index it = 1; it <= cfg.max_iters; ++it) {
    const VectorXd resid = pred_y - y;
    const double f_y = resid.squaredNorm() / n;
    const MatrixXd grad = ds.adjoint(resid) * (2.0 / n);
    detail::ProxPoint z;
    VectorXd pred_z;
    double f_z = 0.0;
    MatrixXd diff;
    for (int bt = 0;; ++bt) {
      z = detail::nuclear_prox(yk - step * grad, step * cfg.lambda);
      pred_z = ds.apply(z.theta);
      f_z = (pred_z - y).squaredNorm() / n;
      diff = z.theta - yk;
      const double bound = f_y + (grad.array() * diff.array()).sum() + diff.squaredNorm() / (2.0 * step);
      if (cfg.step_rule == StepRule::fixed || f_z <= bound + 1e-12 * std::max(1.0, std::abs(f_y)) || bt >= 60)
        break;
      step *= 0.5;
    }
    const double obj_z = f_z + cfg.lambda * z.nuclear;
    const double grad_map = diff.norm() / step;
    out.iterations = it;
    ++out.diagnostics.iterations_checked;

    x_prev = x;
    const double fx_prev = fx;
    const bool accepted = obj_z <= fx;
    if (accepted) {
      x = z.theta;
      pred_x = pred_z;
      fx = obj_z;
    }
    if (objective_increased(fx_prev, fx)) ++out.diagnostics.monotonicity_violations;
    if (accepted && grad_map < cfg.grad_tol) {
      out.converged = true;
      break;
    }
    if (cfg.accelerate) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      yk = x + (t / t_next) * (z.theta - x) + ((t - 1.0) / t_next) * (x - x_prev);
      t = t_next;
      pred_y = ds.apply(yk);
    } else {
      yk = x;
      pred_y = pred_x;
    }
  }
  out.objective = fx;
  out.estimate = CoefficientMatrix(std::move(x));
  return out;
}

/// Solutions for a decreasing sequence of lambdas, each warm-started from the previous one.
inline std::vector<FitResult> fit_nn_path(const TraceRegressionDataset& data, std::vector<double> lambdas,
                                          NnConfig cfg, std::optional<MatrixXd> warm = std::nullopt) {
  std::vector<std::size_t> order(lambdas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });
  std::vector<FitResult> out(lambdas.size());
  for (std::size_t k : order) {
    cfg.lambda = lambdas[k];
    out[k] = fit_nn(data, cfg, warm);
    warm = out[k].estimate.values();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral initialization
// ---------------------------------------------------------------------------

/// Best rank-r approximation of (1/n) sum_i y_i X_i.
inline CoefficientMatrix spectral_init(const TraceRegressionDataset& data, Index rank) {
  if (rank < 1) throw PreconditionError("spectral_init: rank must be >= 1");
  const MatrixXd moment = data.designs().adjoint(data.responses()) / static_cast<double>(data.size());
  return CoefficientMatrix(top_svd(moment, rank).reconstruct(), rank);
}

// ---------------------------------------------------------------------------
// Oracle least squares on X_{V*}
// ---------------------------------------------------------------------------

/// Theta = U V*^T with vec(U) the least-squares coefficient of y on X_{V*};
/// the fitted values are the projection of y onto the column space of X_{V*}.
inline FitResult fit_oracle_ls(const TraceRegressionDataset& data, const MatrixXd& v_star) {
  if (v_star.rows() != data.d2()) throw DimensionError("fit_oracle_ls: V* must have d2 rows");
  if (v_star.cols() < 1) throw DimensionError("fit_oracle_ls: V* needs at least one column");
  const MatrixXd xv = detail::right_reduced(data.designs(), v_star);
  const auto sol = least_squares(xv, data.responses());
  FitResult out;
  out.estimate = CoefficientMatrix(sol.coef.reshaped(data.d1(), v_star.cols()) * v_star.transpose());
  out.objective = (data.responses() - xv * sol.coef).squaredNorm();
  out.iterations = 1;
  out.converged = true;
  out.diagnostics.fits = 1;
  out.diagnostics.rank_deficient_solves = sol.rank_deficient ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Alternating minimization for the rank-constrained least-squares problem
// ---------------------------------------------------------------------------

struct SpectralStart {};
/// Warm start from the nuclear-norm solution at lambda = ratio * lambda_max.
struct NuclearNormStart {
  double lambda_ratio = 1.0;
};
struct RandomStart {
  std::uint64_t seed = 0;
};
/// Explicit starting matrix; only its top right singular vectors are used.
struct GivenStart {
  MatrixXd theta;
};
using AmStart = std::variant<SpectralStart, NuclearNormStart, RandomStart, GivenStart>;

/// Spectral start plus nuclear-norm warm starts at lambda_max * 10^{0, -1/2, -1, -3/2, -2}.
inline std::vector<AmStart> default_am_starts() {
  std::vector<AmStart> s{SpectralStart{}};
  for (int k = 0; k <= 4; ++k) s.emplace_back(NuclearNormStart{std::pow(10.0, -0.5 * k)});
  return s;
}

/// The nuclear-norm warm starts only need to land in the right basin.
inline NnConfig default_warm_start_nn() {
  NnConfig c;
  c.max_iters = 100;
  c.grad_tol = 1e-4;
  return c;
}

enum class InnerSolver { cholesky, qr };

struct AmConfig {
  Index rank = 1;
  Index max_outer_iters = 500;
  double rel_obj_tol = 1e-8;
  std::vector<AmStart> restarts = default_am_starts();
  NnConfig warm_start_nn = default_warm_start_nn();
  InnerSolver inner_solver = InnerSolver::cholesky;
};

/// Full-size starting matrices resolved from AmStart descriptors. Independent of
/// the rank, so one set can serve fits at several ranks.
struct AmStartSet {
  std::vector<MatrixXd> thetas;
  std::vector<std::optional<MatrixXd>> right_factors;  // set for RandomStart (already d2 x r)
  SolverDiagnostics diagnostics;
};

inline AmStartSet resolve_am_starts(const TraceRegressionDataset& data, const std::vector<AmStart>& starts,
                                    Index rank, const NnConfig& nn_cfg) {
  AmStartSet out;
  const Index d1 = data.d1(), d2 = data.d2();
  const MatrixXd moment = data.designs().adjoint(data.responses()) / static_cast<double>(data.size());
  std::vector<double> nn_lambdas;
  std::vector<std::size_t> nn_slots;
  out.thetas.resize(starts.size());
  out.right_factors.resize(starts.size());
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const AmStart& s = starts[k];
    if (std::holds_alternative<SpectralStart>(s)) {
      out.thetas[k] = moment;
    } else if (const auto* nn = std::get_if<NuclearNormStart>(&s)) {
      nn_lambdas.push_back(nn->lambda_ratio);
      nn_slots.push_back(k);
    } else if (const auto* rs = std::get_if<RandomStart>(&s)) {
      out.thetas[k] = MatrixXd::Zero(d1, d2);
      out.right_factors[k] = haar_stiefel(d2, std::min(rank, d2), rs->seed);
    } else {
      const auto& g = std::get<GivenStart>(s);
      data.designs().check_shape(g.theta);
      out.thetas[k] = g.theta;
    }
  }
  if (!nn_lambdas.empty()) {
    const double lmax = 2.0 * operator_norm(moment);
    for (double& l : nn_lambdas) l *= lmax;
    auto path = fit_nn_path(data, nn_lambdas, nn_cfg);
    for (std::size_t j = 0; j < path.size(); ++j) {
      out.thetas[nn_slots[j]] = path[j].estimate.values();
      out.diagnostics += path[j].diagnostics;
    }
  }
  return out;
}

namespace detail {

struct AmRun {
  MatrixXd u, v;
  double objective = std::numeric_limits<double>::infinity();
  Index iterations = 0;
  bool converged = false;
  SolverDiagnostics diagnostics;
};

struct HalfStep {
  MatrixXd factor;  // the factor just solved for
  VectorXd fitted;
  bool rank_deficient = false;
};

// Solve for the left factor U (d1 x r) with the right factor V fixed.
inline HalfStep solve_left(const DesignStack& ds, const VectorXd& y, const MatrixXd& v, InnerSolver solver) {
  const Index d1 = ds.d1(), r = v.cols();
  HalfStep h;
  if (ds.singleton()) {
    // <e_j e_k^T, U V^T> = U(j,:) . V(k,:): one small problem per row of U.
    h.factor = MatrixXd::Zero(d1, r);
    h.fitted = VectorXd::Zero(y.size());
    const auto& groups = ds.observations_by_row();
    for (Index j = 0; j < d1; ++j) {
      const auto& obs = groups[static_cast<std::size_t>(j)];
      if (obs.empty()) continue;
      MatrixXd a(static_cast<Index>(obs.size()), r);
      VectorXd b(static_cast<Index>(obs.size()));
      for (std::size_t t = 0; t < obs.size(); ++t) {
        const Index i = obs[t];
        a.row(static_cast<Index>(t)) = ds.cell_value(i) * v.row(ds.cell_col(i));
        b[static_cast<Index>(t)] = y[i];
      }
      const auto sol = least_squares(a, b);
      h.rank_deficient = h.rank_deficient || sol.rank_deficient;
      h.factor.row(j) = sol.coef.transpose();
      const VectorXd f = a * sol.coef;
      for (std::size_t t = 0; t < obs.size(); ++t) h.fitted[obs[t]] = f[static_cast<Index>(t)];
    }
    return h;
  }
  const MatrixXd xv = right_reduced(ds, v);
  const auto sol = solver == InnerSolver::qr ? least_squares(xv, y) : least_squares_normal(xv, y);
  h.rank_deficient = sol.rank_deficient;
  h.factor = sol.coef.reshaped(d1, r);
  h.fitted = xv * sol.coef;
  return h;
}

// Solve for the right factor V (d2 x r) with U fixed.
inline HalfStep solve_right(const DesignStack& ds, const VectorXd& y, const MatrixXd& u, InnerSolver solver) {
  const Index d2 = ds.d2(), r = u.cols();
  HalfStep h;
  if (ds.singleton()) {
    h.factor = MatrixXd::Zero(d2, r);
    h.fitted = VectorXd::Zero(y.size());
    const auto& groups = ds.observations_by_col();
    for (Index k = 0; k < d2; ++k) {
      const auto& obs = groups[static_cast<std::size_t>(k)];
      if (obs.empty()) continue;
      MatrixXd a(static_cast<Index>(obs.size()), r);
      VectorXd b(static_cast<Index>(obs.size()));
      for (std::size_t t = 0; t < obs.size(); ++t) {
        const Index i = obs[t];
        a.row(static_cast<Index>(t)) = ds.cell_value(i) * u.row(ds.cell_row(i));
        b[static_cast<Index>(t)] = y[i];
      }
      const auto sol = least_squares(a, b);
      h.rank_deficient = h.rank_deficient || sol.rank_deficient;
      h.factor.row(k) = sol.coef.transpose();
      const VectorXd f = a * sol.coef;
      for (std::size_t t = 0; t < obs.size(); ++t) h.fitted[obs[t]] = f[static_cast<Index>(t)];
    }
    return h;
  }
  const MatrixXd zu = left_reduced(ds, u);
  const auto sol = solver == InnerSolver::qr ? least_squares(zu, y) : least_squares_normal(zu, y);
  h.rank_deficient = sol.rank_deficient;
  h.factor = sol.coef.reshaped(d2, r);
  h.fitted = zu * sol.coef;
  return h;
}

inline AmRun alternate(const TraceRegressionDataset& data, MatrixXd v, const AmConfig& cfg) {
  const DesignStack& ds = data.designs();
  const VectorXd& y = data.responses();
  AmRun run;
  run.diagnostics.fits = 1;
  double prev = std::numeric_limits<double>::infinity();
  double last_full = std::numeric_limits<double>::infinity();
  for (Index it = 1; it <= cfg.max_outer_iters; ++it) {
    // Replacing V by an orthonormal basis of its span leaves the U-step optimum unchanged.
    v = orthonormalize(v);
    auto hu = solve_left(ds, y, v, cfg.inner_solver);
    const double obj_u = (y - hu.fitted).squaredNorm();
    run.u = std::move(hu.factor);
    auto hv = solve_right(ds, y, run.u, cfg.inner_solver);
    const double obj_v = (y - hv.fitted).squaredNorm();
    v = std::move(hv.factor);

    run.diagnostics.rank_deficient_solves += (hu.rank_deficient ? 1 : 0) + (hv.rank_deficient ? 1 : 0);
    run.diagnostics.iterations_checked += 2;
    if (objective_increased(prev, obj_u)) ++run.diagnostics.monotonicity_violations;
    if (objective_increased(obj_u, obj_v)) ++run.diagnostics.monotonicity_violations;
    prev = obj_v;
    run.iterations = it;
    const bool done = std::isfinite(last_full) && last_full - obj_v <= cfg.rel_obj_tol * last_full;
    last_full = obj_v;
    if (done) {
      run.converged = true;
      break;
    }
  }
  run.v = v;
  run.objective = last_full;
  return run;
}

}  // namespace detail

/// Rank-constrained least squares by alternating minimization over Theta = U V^T.
///
/// Each restart alternates exact least-squares solves for U (design X_V) and
/// for V (design with rows vec(X_i^T U)) until the relative objective decrease
/// drops below rel_obj_tol. The restart with the smallest objective wins.
inline FitResult fit_am(const TraceRegressionDataset& data, const AmConfig& cfg,
                        const AmStartSet* precomputed = nullptr) {
  const Index d1 = data.d1(), d2 = data.d2();
  if (cfg.rank < 1) throw PreconditionError("fit_am: rank must be >= 1");
  if (cfg.rank > std::min(d1, d2)) throw PreconditionError("fit_am: rank exceeds min(d1, d2)");
  if (!(cfg.rel_obj_tol > 0.0)) throw PreconditionError("fit_am: rel_obj_tol must be positive");
  if (cfg.restarts.empty() && !precomputed) throw PreconditionError("fit_am: no restarts configured");

  AmStartSet local;
  if (!precomputed) local = resolve_am_starts(data, cfg.restarts, cfg.rank, cfg.warm_start_nn);
  const AmStartSet& starts = precomputed ? *precomputed : local;

  FitResult out;
  out.diagnostics = starts.diagnostics;
  detail::AmRun best;
  for (std::size_t k = 0; k < starts.thetas.size(); ++k) {
    MatrixXd v0;
    if (starts.right_factors[k] && starts.right_factors[k]->cols() == cfg.rank) {
      v0 = *starts.right_factors[k];
    } else {
      v0 = top_svd(starts.thetas[k], cfg.rank).v;
    }
    auto run = detail::alternate(data, std::move(v0), cfg);
    out.diagnostics += run.diagnostics;
    out.restart_objectives.push_back(run.objective);
    if (run.objective < best.objective) {
      out.restart_index = static_cast<Index>(k);
      best = std::move(run);
    }
  }
  out.objective = best.objective;
  out.iterations = best.iterations;
  out.converged = best.converged;
  out.estimate = CoefficientMatrix(best.u * best.v.transpose(), cfg.rank);
  return out;
}

/// Near-global rank-constrained fit for tiny instances: AM from the spectral
/// start and n_restarts Haar-random right factors, best objective kept.
struct RankOracleResult {
  FitResult fit;
  double best_first_half = 0.0;  // best objective among the first half of the restarts
  bool saturated = false;        // best_first_half equals the overall best (rel. 1e-6)
};

inline RankOracleResult fit_rank_oracle_exact(const TraceRegressionDataset& data, Index rank,
                                              Index n_restarts = 200, std::uint64_t seed = 0) {
  if (data.d1() * data.d2() > 16 || data.size() > 30)
    throw SizeError("fit_rank_oracle_exact: needs d1*d2 <= 16 and n <= 30");
  if (n_restarts < 1) throw PreconditionError("fit_rank_oracle_exact: n_restarts must be >= 1");
  AmConfig cfg;
  cfg.rank = rank;
  cfg.max_outer_iters = 2000;
  cfg.rel_obj_tol = 1e-12;
  cfg.restarts.clear();
  cfg.restarts.emplace_back(SpectralStart{});
  for (Index k = 0; k < n_restarts; ++k)
    cfg.restarts.emplace_back(RandomStart{substream_seed(seed, {static_cast<std::uint64_t>(k)})});
  RankOracleResult out;
  out.fit = fit_am(data, cfg);
  const auto& objs = out.fit.restart_objectives;
  const std::size_t half = 1 + static_cast<std::size_t>(n_restarts) / 2;
  out.best_first_half = *std::min_element(objs.begin(), objs.begin() + static_cast<std::ptrdiff_t>(half));
  const double best = out.fit.objective;
  out.saturated = out.best_first_half - best <= 1e-6 * std::max(best, 1e-300) || out.best_first_half <= 1e-20;
  return out;
}

// ---------------------------------------------------------------------------
// Sparse linear analogues
// ---------------------------------------------------------------------------

struct SparseConfig {
  Index p = 0;          // ambient dimension; 0 means "take it from x"
  Index sparsity = 1;   // s, for best subset
  double lambda = 0.0;  // for the lasso
  double tol = 1e-8;
  Index max_sweeps = 100000;
};

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Largest KKT violation of (1/n)||y - x b||^2 + lambda ||b||_1 at b.
inline double lasso_kkt_violation(const MatrixXd& x, const VectorXd& y, const VectorXd& b, double lambda) {
  const double n = static_cast<double>(x.rows());
  const VectorXd g = (2.0 / n) * (x.transpose() * (y - x * b));
  double worst = 0.0;
  for (Index j = 0; j < b.size(); ++j) {
    const double v = b[j] != 0.0 ? std::abs(g[j] - lambda * (b[j] > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(g[j]) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

/// Lasso by cyclic coordinate descent, stopped when the KKT violation is below tol.
inline VectorXd fit_lasso(const MatrixXd& x, const VectorXd& y, const SparseConfig& cfg) {
  if (x.rows() != y.size()) throw DimensionError("fit_lasso: x and y disagree on n");
  if (cfg.p != 0 && cfg.p != x.cols()) throw DimensionError("fit_lasso: p does not match x");
  if (!(cfg.lambda >= 0.0)) throw PreconditionError("fit_lasso: lambda must be >= 0");
  const Index p = x.cols();
  const double n = static_cast<double>(x.rows());
  const VectorXd col_sq = x.colwise().squaredNorm().transpose();
  VectorXd b = VectorXd::Zero(p);
  VectorXd r = y;
  for (Index sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    for (Index j = 0; j < p; ++j) {
      if (col_sq[j] == 0.0) continue;
      const double curv = 2.0 / n * col_sq[j];
      const double z = 2.0 / n * x.col(j).dot(r) + curv * b[j];
      const double bj = soft_threshold(z, cfg.lambda) / curv;
      if (bj != b[j]) {
        r -= (bj - b[j]) * x.col(j);
        b[j] = bj;
      }
    }
    if (lasso_kkt_violation(x, y, b, cfg.lambda) <= cfg.tol) break;
  }
  return b;
}

struct SubsetFit {
  VectorXd beta;
  std::vector<Index> support;
  double rss = 0.0;
};

/// Best subset selection by exhaustive enumeration of supports of size <= s.
/// RSS values within 1e-12 (relative) count as ties; ties go to the smaller
/// support, then to the lexicographically smallest one.
inline SubsetFit fit_l0_detailed(const MatrixXd& x, const VectorXd& y, const SparseConfig& cfg) {
  if (x.rows() != y.size()) throw DimensionError("fit_l0: x and y disagree on n");
  const Index p = x.cols();
  if (cfg.p != 0 && cfg.p != p) throw DimensionError("fit_l0: p does not match x");
  if (cfg.sparsity < 0 || cfg.sparsity > p) throw PreconditionError("fit_l0: need 0 <= s <= p");
  if (p > 30 || cfg.sparsity > 3) throw SizeError("fit_l0: exhaustive search needs p <= 30 and s <= 3");

  SubsetFit best;
  best.beta = VectorXd::Zero(p);
  best.rss = y.squaredNorm();
  std::vector<Index> idx;
  auto consider = [&](const std::vector<Index>& support) {
    MatrixXd xs(x.rows(), static_cast<Index>(support.size()));
    for (std::size_t k = 0; k < support.size(); ++k) xs.col(static_cast<Index>(k)) = x.col(support[k]);
    const auto sol = least_squares(xs, y);
    const double rss = (y - xs * sol.coef).squaredNorm();
    // Enumeration runs in the tie-break order, so only a strict improvement wins.
    const bool better = rss < best.rss - 1e-12 * std::max(1.0, best.rss);
    if (better) {
      best.rss = rss;
      best.support = support;
      best.beta.setZero();
      for (std::size_t k = 0; k < support.size(); ++k) best.beta[support[k]] = sol.coef[static_cast<Index>(k)];
    }
  };
  // Supports in increasing size, lexicographic within a size.
  for (Index size = 1; size <= cfg.sparsity; ++size) {
    idx.resize(static_cast<std::size_t>(size));
    std::iota(idx.begin(), idx.end(), Index{0});
    while (true) {
      consider(idx);
      Index k = size - 1;
      while (k >= 0 && idx[static_cast<std::size_t>(k)] == p - size + k) --k;
      if (k < 0) break;
      ++idx[static_cast<std::size_t>(k)];
      for (Index m = k + 1; m < size; ++m) idx[static_cast<std::size_t>(m)] = idx[static_cast<std::size_t>(m - 1)] + 1;
    }
  }
  return best;
}

inline VectorXd fit_l0(const MatrixXd& x, const VectorXd& y, const SparseConfig& cfg) {
  return fit_l0_detailed(x, y, cfg).beta;
}

}  // namespace tracelab

#endif  // TRACELAB_ESTIMATORS_HPP

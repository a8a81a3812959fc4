#ifndef TRACELAB_THEORY_HPP
#define TRACELAB_THEORY_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "tracelab/datagen.hpp"
#include "tracelab/errors.hpp"
#include "tracelab/estimators.hpp"
#include "tracelab/model.hpp"
#include "tracelab/parallel.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/serialization.hpp"

namespace tracelab {

struct CoveringBoundInput {
  Index r = 1;
  Index d1 = 1;
  Index d2 = 1;
  Index n = 1;
  double epsilon = 0.5;
};

/// log of 2^{r d1} (12 r d1 n^3 / eps)^{r d2 + 1}, the covering-number bound
/// for the family of projections onto column spaces of X_V.
inline double covering_bound_log(const CoveringBoundInput& in) {
  if (!(in.epsilon > 0.0 && in.epsilon < 1.0)) throw DomainError("covering_bound_log: epsilon must lie in (0, 1)");
  if (in.r < 1 || in.d1 < 1 || in.d2 < 1 || in.n < 1)
    throw DomainError("covering_bound_log: r, d1, d2, n must be positive");
  const double r = static_cast<double>(in.r), d1 = static_cast<double>(in.d1), d2 = static_cast<double>(in.d2),
               n = static_cast<double>(in.n);
  return r * d1 * std::log(2.0) +
         (r * d2 + 1.0) * (std::log(12.0 * r * d1) + 3.0 * std::log(n) - std::log(in.epsilon));
}

/// (1/n) sum <X_i, Delta>^2 <= (4/n) ||P_V eps||^2 where V spans the row space
/// of Delta = Theta_hat - Theta* and P_V projects onto the columns of X_V.
struct Lemma1Check {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  bool saturated = false;
  double fit_objective = 0.0;
  double truth_objective = 0.0;
};

/// ||P_V eps||^2 for an orthonormal V (may have zero columns).
inline double projected_noise_energy(const TraceRegressionDataset& data, const MatrixXd& v, const VectorXd& eps) {
  if (v.cols() == 0) return 0.0;
  return project_onto_columns(detail::right_reduced(data.designs(), v), eps).squaredNorm();
}

inline Lemma1Check check_lemma1(const TraceRegressionDataset& data, Index rank, Index n_restarts = 200,
                                std::uint64_t seed = 0) {
  if (!data.truth()) throw PreconditionError("check_lemma1: dataset needs ground truth");
  const auto oracle = fit_rank_oracle_exact(data, rank, n_restarts, seed);
  const MatrixXd& theta_hat = oracle.fit.estimate.values();
  const MatrixXd delta = theta_hat - *data.truth();
  const VectorXd eps = data.noise();
  const double n = static_cast<double>(data.size());
  Lemma1Check out;
  out.lhs = in_sample_risk(theta_hat, data);
  out.rhs = 4.0 / n * projected_noise_energy(data, row_space_basis(delta), eps);
  out.holds = out.lhs <= out.rhs + 1e-8;
  out.saturated = oracle.saturated;
  out.fit_objective = oracle.fit.objective;
  out.truth_objective = eps.squaredNorm();
  return out;
}

struct Lemma1Suite {
  std::vector<Lemma1Check> checks;
  Index holds = 0;
  Index saturated = 0;
  Index optimal = 0;  // fit objective <= objective of the truth

  bool all_pass() const {
    const auto n = static_cast<Index>(checks.size());
    return holds == n && saturated == n && optimal == n;
  }
};

/// check_lemma1 on `instances` random Gaussian d x d problems with r* = rank,
/// unit noise.
inline Lemma1Suite run_lemma1_suite(Index instances, std::uint64_t seed, Index d = 3, Index n = 12, Index rank = 1,
                                    double snr = 1.0, unsigned workers = 1) {
  Lemma1Suite out;
  out.checks.resize(static_cast<std::size_t>(instances));
  parallel_for(out.checks.size(), workers, [&](std::size_t k) {
    const std::uint64_t s = substream_seed(seed, {stream_key("lemma1"), k});
    const auto data = gen_dataset(DesignKind{DesignVariant::gaussian, d, d}, SignalSpec{rank, snr, substream_seed(s, {1})},
                                  n, 1.0, substream_seed(s, {2}));
    out.checks[k] = check_lemma1(data, rank, 200, substream_seed(s, {3}));
  });
  for (const auto& c : out.checks) {
    out.holds += c.holds;
    out.saturated += c.saturated;
    out.optimal += c.fit_objective <= c.truth_objective * (1.0 + 1e-10) + 1e-12;
  }
  return out;
}

/// Oracle inequality under rank misspecification, in the form of its proof:
///   ||f - X Theta_hat|| <= ||f - X Theta_tilde|| + 4 ||P_V eps||
/// with Theta_tilde the best rank-r fit to the noiseless signal f and V the
/// row space of Theta_hat - Theta_tilde.
struct MisspecifiedRankCheck {
  double fit_error = 0.0;     // ||f - X Theta_hat||
  double approx_error = 0.0;  // ||f - X Theta_tilde||
  double noise_term = 0.0;    // 4 ||P_V eps||
  bool holds = false;
};

inline MisspecifiedRankCheck check_misspecified_rank(const TraceRegressionDataset& data, Index rank,
                                                     Index n_restarts = 200, std::uint64_t seed = 0) {
  if (!data.truth()) throw PreconditionError("check_misspecified_rank: dataset needs ground truth");
  const VectorXd f = data.predict(*data.truth());
  const VectorXd eps = data.responses() - f;
  const auto fit = fit_rank_oracle_exact(data, rank, n_restarts, seed);
  const auto best = fit_rank_oracle_exact(data.with_responses(f), rank, n_restarts, seed + 1);
  const MatrixXd& theta_hat = fit.fit.estimate.values();
  const MatrixXd& theta_tilde = best.fit.estimate.values();
  MisspecifiedRankCheck out;
  out.fit_error = (f - data.predict(theta_hat)).norm();
  out.approx_error = (f - data.predict(theta_tilde)).norm();
  out.noise_term = 4.0 * std::sqrt(projected_noise_energy(data, row_space_basis(theta_hat - theta_tilde), eps));
  out.holds = out.fit_error <= out.approx_error + out.noise_term + 1e-8;
  return out;
}

struct ScalingPoint {
  Index n = 0, d = 0, r = 0;
};

struct ScalingProbeResult {
  std::vector<ScalingPoint> grid;
  std::vector<double> risks;            // mean AM risk
  std::vector<double> normalized;       // risk * n / (r d ln n)
  std::vector<double> ls_risks;         // mean oracle least-squares risk, for contrast
  std::vector<double> ls_normalized;
  SolverDiagnostics diagnostics;

  double max_min_ratio() const {
    const auto [lo, hi] = std::minmax_element(normalized.begin(), normalized.end());
    return *hi / *lo;
  }
};

inline double normalize_risk(double risk, const ScalingPoint& p) {
  return risk * static_cast<double>(p.n) /
         (static_cast<double>(p.r * p.d) * std::log(static_cast<double>(p.n)));
}

/// Mean in-sample risk of the rank-r AM fit (r* = r, Gaussian d x d design,
/// unit noise) at each grid point.
inline ScalingProbeResult risk_scaling_probe(const std::vector<ScalingPoint>& grid, Index reps, std::uint64_t seed,
                                             double snr = 25.0, unsigned workers = 1) {
  if (reps < 1) throw PreconditionError("risk_scaling_probe: reps must be >= 1");
  ScalingProbeResult out;
  out.grid = grid;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto& pt = grid[g];
    if (pt.r * pt.d >= pt.n) throw PreconditionError("risk_scaling_probe: need r*d < n at every grid point");
    std::vector<double> am(static_cast<std::size_t>(reps)), ls(static_cast<std::size_t>(reps));
    std::vector<SolverDiagnostics> diags(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), workers, [&](std::size_t k) {
      const std::uint64_t cell = substream_seed(seed, {static_cast<std::uint64_t>(pt.n),
                                                       static_cast<std::uint64_t>(pt.d),
                                                       static_cast<std::uint64_t>(pt.r), k});
      const DesignKind kind{DesignVariant::gaussian, pt.d, pt.d};
      const auto data = gen_dataset(kind, SignalSpec{pt.r, snr, substream_seed(cell, {1})}, pt.n, 1.0,
                                    substream_seed(cell, {2}));
      AmConfig cfg;
      cfg.rank = pt.r;
      const auto fit = fit_am(data, cfg);
      am[k] = in_sample_risk(fit.estimate, data);
      diags[k] = fit.diagnostics;
      ls[k] = in_sample_risk(fit_oracle_ls(data, *data.oracle_right_factor()).estimate, data);
    });
    double sa = 0.0, sl = 0.0;
    for (std::size_t k = 0; k < am.size(); ++k) {
      sa += am[k];
      sl += ls[k];
      out.diagnostics += diags[k];
    }
    out.risks.push_back(sa / static_cast<double>(reps));
    out.ls_risks.push_back(sl / static_cast<double>(reps));
    out.normalized.push_back(normalize_risk(out.risks.back(), pt));
    out.ls_normalized.push_back(normalize_risk(out.ls_risks.back(), pt));
  }
  return out;
}

/// CSV with columns n,d,r,mean_risk,normalized_risk.
inline void write_probe_csv(std::ostream& os, const ScalingProbeResult& res) {
  os << "n,d,r,mean_risk,normalized_risk\n";
  for (std::size_t g = 0; g < res.grid.size(); ++g)
    os << res.grid[g].n << ',' << res.grid[g].d << ',' << res.grid[g].r << ',' << format_double(res.risks[g]) << ','
       << format_double(res.normalized[g]) << '\n';
}

}  // namespace tracelab

#endif  // TRACELAB_THEORY_HPP

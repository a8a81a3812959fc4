#ifndef TRACELAB_DATAGEN_HPP
#define TRACELAB_DATAGEN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tracelab/errors.hpp"
#include "tracelab/linalg.hpp"
#include "tracelab/model.hpp"
#include "tracelab/rng.hpp"

namespace tracelab {

enum class DesignVariant { gaussian, matrix_completion, sparse_linear };

inline std::string to_string(DesignVariant v) {
  switch (v) {
    case DesignVariant::gaussian: return "gaussian";
    case DesignVariant::matrix_completion: return "matrix_completion";
    case DesignVariant::sparse_linear: return "sparse_linear";
  }
  return "?";
}

inline DesignVariant parse_design_variant(const std::string& s) {
  if (s == "gaussian") return DesignVariant::gaussian;
  if (s == "matrix_completion") return DesignVariant::matrix_completion;
  if (s == "sparse_linear") return DesignVariant::sparse_linear;
  throw ConfigError("unknown design kind '" + s + "'");
}

/// Design distribution. For sparse_linear, d1 = p and d2 = 1 (each x_i is a p x 1 matrix).
struct DesignKind {
  DesignVariant variant = DesignVariant::gaussian;
  Index d1 = 20;
  Index d2 = 20;

  /// vec(Theta)^T Sigma vec(Theta), Sigma = E[vec(X) vec(X)^T].
  /// Gaussian and sparse-linear: Sigma = I. Matrix completion: Sigma = I / (d1 d2).
  double signal_variance(const MatrixXd& theta) const {
    const double f2 = theta.squaredNorm();
    return variant == DesignVariant::matrix_completion ? f2 / static_cast<double>(d1 * d2) : f2;
  }
};

struct SignalSpec {
  Index rank = 1;
  double snr = 1.0;
  std::uint64_t seed = 0;
};

/// Haar-distributed d x r matrix with orthonormal columns: Q of the QR of a
/// Gaussian matrix, signs fixed so diag(R) > 0.
inline MatrixXd haar_stiefel(Index d, Index r, Engine& rng) {
  if (r < 0 || r > d) throw PreconditionError("haar_stiefel: need 0 <= r <= d");
  if (r == 0) return MatrixXd(d, 0);
  std::normal_distribution<double> gauss;
  MatrixXd g(d, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < d; ++i) g(i, j) = gauss(rng);
  return orthonormalize(g);
}

inline MatrixXd haar_stiefel(Index d, Index r, std::uint64_t seed) {
  Engine rng = make_engine(seed);
  return haar_stiefel(d, r, rng);
}

/// Theta* = U* Lambda V*^T together with its factors.
struct PlantedSignal {
  CoefficientMatrix theta;
  MatrixXd u_star;      // d1 x r*
  MatrixXd v_star;      // d2 x r*
  VectorXd spectrum;    // diagonal of Lambda after scaling
};

/// Draws the planted signal and rescales it so its variance under the design equals snr.
/// With snr = 0 the factors are still drawn (oracle procedures use V*) but Theta* = 0.
inline PlantedSignal make_theta(const SignalSpec& spec, const DesignKind& design) {
  const Index d1 = design.d1, d2 = design.d2;
  if (spec.snr < 0.0 || !std::isfinite(spec.snr)) throw PreconditionError("make_theta: snr must be >= 0");
  if (spec.rank < 0 || spec.rank > std::min(d1, d2))
    throw PreconditionError("make_theta: rank must lie in [0, min(d1, d2)]");
  Engine rng = make_engine(spec.seed, {stream_key("theta")});
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  VectorXd lambda(spec.rank);
  for (Index k = 0; k < spec.rank; ++k) {
    double v = 0.0;
    do v = unif(rng);
    while (std::abs(v) < 1e-8);
    lambda[k] = v;
  }
  PlantedSignal out;
  out.u_star = haar_stiefel(d1, spec.rank, rng);
  out.v_star = haar_stiefel(d2, spec.rank, rng);
  MatrixXd theta = out.u_star * lambda.asDiagonal() * out.v_star.transpose();
  if (spec.snr == 0.0 || spec.rank == 0) {
    out.theta = CoefficientMatrix(MatrixXd::Zero(d1, d2), spec.rank);
    out.spectrum = VectorXd::Zero(spec.rank);
    return out;
  }
  const double scale = std::sqrt(spec.snr / design.signal_variance(theta));
  out.theta = CoefficientMatrix(theta * scale, spec.rank);
  out.spectrum = lambda * scale;
  return out;
}

/// Column-major positions of n distinct singletons e_j e_k^T, uniformly without replacement.
inline std::vector<Index> sample_singletons(Index d1, Index d2, Index n, Engine& rng) {
  const Index total = d1 * d2;
  if (n > total)
    throw SizeError("matrix completion needs n <= d1*d2 (" + std::to_string(n) + " > " +
                    std::to_string(total) + ")");
  std::vector<Index> cells(static_cast<std::size_t>(total));
  std::iota(cells.begin(), cells.end(), Index{0});
  for (Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Index> pick(i, total - 1);
    std::swap(cells[static_cast<std::size_t>(i)], cells[static_cast<std::size_t>(pick(rng))]);
  }
  cells.resize(static_cast<std::size_t>(n));
  return cells;
}

inline std::shared_ptr<const DesignStack> draw_designs(const DesignKind& kind, Index n, Engine& rng) {
  const Index d1 = kind.d1, d2 = kind.d2;
  if (n < 1) throw PreconditionError("need at least one observation");
  MatrixXd stacked = MatrixXd::Zero(d1 * d2, n);
  if (kind.variant == DesignVariant::matrix_completion) {
    const auto cells = sample_singletons(d1, d2, n, rng);
    for (Index i = 0; i < n; ++i) stacked(cells[static_cast<std::size_t>(i)], i) = 1.0;
  } else {
    std::normal_distribution<double> gauss;
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < d1 * d2; ++k) stacked(k, i) = gauss(rng);
  }
  return std::make_shared<const DesignStack>(d1, d2, std::move(stacked));
}

/// Synthetic trace-regression sample with the planted signal stored as truth
/// and V* attached for oracle procedures.
inline TraceRegressionDataset gen_dataset(const DesignKind& kind, const SignalSpec& spec, Index n,
                                          double noise_sd, std::uint64_t seed) {
  if (!(noise_sd >= 0.0)) throw PreconditionError("gen_dataset: noise_sd must be >= 0");
  const PlantedSignal signal = make_theta(spec, kind);
  Engine design_rng = make_engine(seed, {stream_key("design")});
  auto designs = draw_designs(kind, n, design_rng);
  Engine noise_rng = make_engine(seed, {stream_key("noise")});
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd y = designs->apply(signal.theta.values());
  for (Index i = 0; i < n; ++i) y[i] += noise_sd * gauss(noise_rng);
  TraceRegressionDataset data(std::move(designs), std::move(y), signal.theta.values(), noise_sd);
  data.set_oracle_right_factor(signal.v_star);
  return data;
}

struct SparseLinearSample {
  MatrixXd x;                   // n x p
  VectorXd y;                   // n
  VectorXd beta_star;           // p
  std::vector<Index> support;   // sorted
};

/// y = x beta* + eps with s-sparse beta*, beta*^T beta* = snr, unit Gaussian noise.
inline SparseLinearSample gen_sparse_linear(Index p, Index s, double snr, Index n, std::uint64_t seed,
                                            double noise_sd = 1.0) {
  if (s < 0 || s > p) throw PreconditionError("gen_sparse_linear: need 0 <= s <= p");
  if (snr < 0.0) throw PreconditionError("gen_sparse_linear: snr must be >= 0");
  SparseLinearSample out;
  Engine sig = make_engine(seed, {stream_key("beta")});
  out.beta_star = VectorXd::Zero(p);
  // The support is drawn even under the null so support oracles stay defined.
  std::vector<Index> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < s; ++i) {
    std::uniform_int_distribution<Index> pick(i, p - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(sig))]);
  }
  out.support.assign(idx.begin(), idx.begin() + s);
  std::sort(out.support.begin(), out.support.end());
  if (snr > 0.0 && s > 0) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (Index j : out.support) {
      double v = 0.0;
      do v = unif(sig);
      while (std::abs(v) < 1e-8);
      out.beta_star[j] = v;
    }
    out.beta_star *= std::sqrt(snr / out.beta_star.squaredNorm());
  }
  Engine xr = make_engine(seed, {stream_key("design")});
  Engine er = make_engine(seed, {stream_key("noise")});
  std::normal_distribution<double> gauss;
  out.x.resize(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) out.x(i, j) = gauss(xr);
  out.y = out.x * out.beta_star;
  for (Index i = 0; i < n; ++i) out.y[i] += noise_sd * gauss(er);
  return out;
}

/// Views a sparse linear sample as trace regression with p x 1 designs.
inline TraceRegressionDataset as_trace_dataset(const SparseLinearSample& s, std::optional<double> noise_sd = 1.0) {
  MatrixXd stacked = s.x.transpose();
  TraceRegressionDataset data(std::make_shared<const DesignStack>(s.x.cols(), 1, std::move(stacked)), s.y,
                              MatrixXd(s.beta_star), noise_sd);
  return data;
}

}  // namespace tracelab

#endif  // TRACELAB_DATAGEN_HPP

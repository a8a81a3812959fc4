#ifndef TRACELAB_MODEL_HPP
#define TRACELAB_MODEL_HPP

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tracelab/errors.hpp"
#include "tracelab/linalg.hpp"

namespace tracelab {

/// Immutable storage for n design matrices of a common shape d1 x d2.
///
/// Three layouts are kept so that the hot loops of the solvers are single
/// matrix products:
///   stacked  (d1*d2) x n : column i is vec(X_i), column-major vectorization
///   tall     (n*d1) x d2 : [X_1; X_2; ...; X_n]
///   tall_t   (n*d2) x d1 : [X_1^T; ...; X_n^T]
class DesignStack {
 public:
  DesignStack(Index d1, Index d2, MatrixXd stacked) : d1_(d1), d2_(d2), stacked_(std::move(stacked)) {
    if (d1 <= 0 || d2 <= 0) throw DimensionError("DesignStack: dimensions must be positive");
    if (stacked_.rows() != d1 * d2)
      throw DimensionError("DesignStack: stacked rows must equal d1*d2");
    const Index n = stacked_.cols();
    tall_.resize(n * d1, d2);
    tall_t_.resize(n * d2, d1);
    for (Index i = 0; i < n; ++i) {
      auto x = design(i);
      tall_.middleRows(i * d1, d1) = x;
      tall_t_.middleRows(i * d2, d2) = x.transpose();
    }
    detect_singletons();
  }

  static std::shared_ptr<const DesignStack> from_matrices(const std::vector<MatrixXd>& designs) {
    if (designs.empty()) throw DimensionError("DesignStack: at least one design is required");
    const Index d1 = designs.front().rows(), d2 = designs.front().cols();
    MatrixXd stacked(d1 * d2, static_cast<Index>(designs.size()));
    for (std::size_t i = 0; i < designs.size(); ++i) {
      if (designs[i].rows() != d1 || designs[i].cols() != d2)
        throw DimensionError("DesignStack: design " + std::to_string(i) + " has shape " +
                             std::to_string(designs[i].rows()) + "x" +
                             std::to_string(designs[i].cols()) + ", expected " +
                             std::to_string(d1) + "x" + std::to_string(d2));
      stacked.col(static_cast<Index>(i)) = designs[i].reshaped();
    }
    return std::make_shared<const DesignStack>(d1, d2, std::move(stacked));
  }

  Index size() const { return stacked_.cols(); }
  Index d1() const { return d1_; }
  Index d2() const { return d2_; }

  Eigen::Map<const MatrixXd> design(Index i) const {
    return Eigen::Map<const MatrixXd>(stacked_.col(i).data(), d1_, d2_);
  }
  const MatrixXd& stacked() const { return stacked_; }
  const MatrixXd& tall() const { return tall_; }
  const MatrixXd& tall_transposed() const { return tall_t_; }

  /// <X_i, theta> for every i.
  VectorXd apply(const MatrixXd& theta) const {
    check_shape(theta);
    return stacked_.transpose() * theta.reshaped();
  }

  /// sum_i w_i X_i.
  MatrixXd adjoint(const VectorXd& w) const {
    if (w.size() != size()) throw DimensionError("DesignStack::adjoint: weight length mismatch");
    return (stacked_ * w).reshaped(d1_, d2_);
  }

  /// Largest eigenvalue of (1/n) sum_i vec(X_i) vec(X_i)^T, computed once.
  double gram_top_eigenvalue() const {
    std::call_once(gram_once_, [this] {
      const Index n = size();
      const MatrixXd& s = stacked_;
      // The smaller of the two Gram matrices has the same nonzero spectrum.
      MatrixXd g = (s.rows() <= n) ? MatrixXd(s * s.transpose()) : MatrixXd(s.transpose() * s);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(g, Eigen::EigenvaluesOnly);
      gram_top_ = std::max(0.0, es.eigenvalues().maxCoeff()) / static_cast<double>(n);
    });
    return gram_top_;
  }

  /// True when every design has exactly one nonzero entry (matrix completion).
  /// The solvers then split their least-squares problems row by row.
  bool singleton() const { return singleton_; }
  Index cell_row(Index i) const { return cell_row_[static_cast<std::size_t>(i)]; }
  Index cell_col(Index i) const { return cell_col_[static_cast<std::size_t>(i)]; }
  double cell_value(Index i) const { return cell_value_[static_cast<std::size_t>(i)]; }
  const std::vector<std::vector<Index>>& observations_by_row() const { return by_row_; }
  const std::vector<std::vector<Index>>& observations_by_col() const { return by_col_; }

  void check_shape(const MatrixXd& theta) const {
    if (theta.rows() != d1_ || theta.cols() != d2_)
      throw DimensionError("coefficient shape " + std::to_string(theta.rows()) + "x" +
                           std::to_string(theta.cols()) + " does not match design shape " +
                           std::to_string(d1_) + "x" + std::to_string(d2_));
  }

 private:
  void detect_singletons() {
    const Index n = size();
    cell_row_.resize(static_cast<std::size_t>(n));
    cell_col_.resize(static_cast<std::size_t>(n));
    cell_value_.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      Index nz = 0, where = 0;
      for (Index k = 0; k < stacked_.rows(); ++k)
        if (stacked_(k, i) != 0.0) {
          ++nz;
          where = k;
        }
      if (nz != 1) {
        cell_row_.clear();
        cell_col_.clear();
        cell_value_.clear();
        return;
      }
      cell_row_[static_cast<std::size_t>(i)] = where % d1_;
      cell_col_[static_cast<std::size_t>(i)] = where / d1_;
      cell_value_[static_cast<std::size_t>(i)] = stacked_(where, i);
    }
    by_row_.assign(static_cast<std::size_t>(d1_), {});
    by_col_.assign(static_cast<std::size_t>(d2_), {});
    for (Index i = 0; i < n; ++i) {
      by_row_[static_cast<std::size_t>(cell_row_[static_cast<std::size_t>(i)])].push_back(i);
      by_col_[static_cast<std::size_t>(cell_col_[static_cast<std::size_t>(i)])].push_back(i);
    }
    singleton_ = true;
  }

  Index d1_, d2_;
  MatrixXd stacked_;
  MatrixXd tall_;
  MatrixXd tall_t_;
  bool singleton_ = false;
  std::vector<Index> cell_row_, cell_col_;
  std::vector<double> cell_value_;
  std::vector<std::vector<Index>> by_row_, by_col_;
  mutable std::once_flag gram_once_;
  mutable double gram_top_ = 0.0;
};

/// y_i = <X_i, Theta*> + eps_i, i = 1..n.
///
/// Copies share the design storage; only responses and metadata are per-copy,
/// which keeps permuted copies cheap.
class TraceRegressionDataset {
 public:
  TraceRegressionDataset(std::shared_ptr<const DesignStack> designs, VectorXd responses,
                         std::optional<MatrixXd> truth = std::nullopt,
                         std::optional<double> noise_sd = std::nullopt)
      : designs_(std::move(designs)),
        responses_(std::move(responses)),
        truth_(std::move(truth)),
        noise_sd_(noise_sd) {
    if (!designs_) throw DimensionError("dataset: null design storage");
    if (responses_.size() != designs_->size())
      throw DimensionError("dataset: " + std::to_string(responses_.size()) + " responses for " +
                           std::to_string(designs_->size()) + " designs");
    if (truth_) designs_->check_shape(*truth_);
    if (noise_sd_ && !(*noise_sd_ >= 0.0)) throw PreconditionError("dataset: noise_sd must be >= 0");
  }

  TraceRegressionDataset(const std::vector<MatrixXd>& designs, VectorXd responses,
                         std::optional<MatrixXd> truth = std::nullopt,
                         std::optional<double> noise_sd = std::nullopt)
      : TraceRegressionDataset(DesignStack::from_matrices(designs), std::move(responses),
                               std::move(truth), noise_sd) {}

  Index size() const { return designs_->size(); }
  Index d1() const { return designs_->d1(); }
  Index d2() const { return designs_->d2(); }

  Eigen::Map<const MatrixXd> design(Index i) const { return designs_->design(i); }
  const DesignStack& designs() const { return *designs_; }
  const std::shared_ptr<const DesignStack>& design_storage() const { return designs_; }
  const VectorXd& responses() const { return responses_; }
  const std::optional<MatrixXd>& truth() const { return truth_; }
  std::optional<double> noise_sd() const { return noise_sd_; }

  /// Right singular factor V* of the planted signal, when the generator knows it.
  /// Oracle procedures (least squares on X_{V*}, the F-test) need it even when Theta* = 0.
  const std::optional<MatrixXd>& oracle_right_factor() const { return oracle_v_; }
  TraceRegressionDataset& set_oracle_right_factor(MatrixXd v) {
    if (v.rows() != d2()) throw DimensionError("oracle right factor must have d2 rows");
    oracle_v_ = std::move(v);
    return *this;
  }

  VectorXd predict(const MatrixXd& theta) const { return designs_->apply(theta); }

  /// eps = y - <X, Theta*>.
  VectorXd noise() const {
    if (!truth_) throw PreconditionError("dataset has no ground truth");
    return responses_ - predict(*truth_);
  }

  TraceRegressionDataset with_responses(VectorXd y) const {
    TraceRegressionDataset out(designs_, std::move(y), truth_, noise_sd_);
    out.oracle_v_ = oracle_v_;
    return out;
  }

  TraceRegressionDataset without_truth() const {
    TraceRegressionDataset out(designs_, responses_);
    return out;
  }

  /// Observations at the given indices, in the given order.
  TraceRegressionDataset subset(std::span<const Index> rows) const {
    MatrixXd stacked(designs_->stacked().rows(), static_cast<Index>(rows.size()));
    VectorXd y(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Index i = rows[k];
      if (i < 0 || i >= size()) throw DimensionError("subset: index out of range");
      stacked.col(static_cast<Index>(k)) = designs_->stacked().col(i);
      y[static_cast<Index>(k)] = responses_[i];
    }
    TraceRegressionDataset out(std::make_shared<const DesignStack>(d1(), d2(), std::move(stacked)),
                               std::move(y), truth_, noise_sd_);
    out.oracle_v_ = oracle_v_;
    return out;
  }

 private:
  std::shared_ptr<const DesignStack> designs_;
  VectorXd responses_;
  std::optional<MatrixXd> truth_;
  std::optional<double> noise_sd_;
  std::optional<MatrixXd> oracle_v_;
};

/// A coefficient matrix, optionally carrying the rank it was constrained to.
class CoefficientMatrix {
 public:
  CoefficientMatrix() = default;
  explicit CoefficientMatrix(MatrixXd values, std::optional<Index> declared_rank = std::nullopt)
      : values_(std::move(values)), declared_rank_(declared_rank) {
    if (declared_rank_) {
      if (*declared_rank_ < 0) throw PreconditionError("declared rank must be nonnegative");
      const Index r = numerical_rank(values_);
      if (r > *declared_rank_)
        throw ValidationError("coefficient matrix has numerical rank " + std::to_string(r) +
                              " above declared rank " + std::to_string(*declared_rank_));
    }
  }

  const MatrixXd& values() const { return values_; }
  std::optional<Index> declared_rank() const { return declared_rank_; }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

 private:
  MatrixXd values_;
  std::optional<Index> declared_rank_;
};

/// X_V: row i is vec(X_i V). For fixed V, <X_i, U V^T> = <row_i, vec(U)>.
struct ReducedDesign {
  MatrixXd matrix;    // n x (r*d1)
  MatrixXd source_v;  // d2 x r
};

/// tr(a^T b).
inline double trace_inner(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("trace_inner: shapes " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + " differ");
  return (a.array() * b.array()).sum();
}

namespace detail {

// Rows vec(X_i V), computed as one product with the tall layout.
inline MatrixXd right_reduced(const DesignStack& ds, const MatrixXd& v) {
  const Index n = ds.size(), d1 = ds.d1(), r = v.cols();
  const MatrixXd tv = ds.tall() * v;  // (n*d1) x r
  MatrixXd out(n, r * d1);
  for (Index c = 0; c < r; ++c)
    out.middleCols(c * d1, d1) = Eigen::Map<const MatrixXd>(tv.col(c).data(), d1, n).transpose();
  return out;
}

// Rows vec(X_i^T U); <X_i, U V^T> = <row_i, vec(V)>.
inline MatrixXd left_reduced(const DesignStack& ds, const MatrixXd& u) {
  const Index n = ds.size(), d2 = ds.d2(), r = u.cols();
  const MatrixXd tu = ds.tall_transposed() * u;  // (n*d2) x r
  MatrixXd out(n, r * d2);
  for (Index c = 0; c < r; ++c)
    out.middleCols(c * d2, d2) = Eigen::Map<const MatrixXd>(tu.col(c).data(), d2, n).transpose();
  return out;
}

}  // namespace detail

/// Builds X_V and checks every entry against the direct product X_i V.
inline ReducedDesign build_reduced_design(const TraceRegressionDataset& data, const MatrixXd& v) {
  if (v.rows() != data.d2())
    throw DimensionError("build_reduced_design: V has " + std::to_string(v.rows()) +
                         " rows, expected d2 = " + std::to_string(data.d2()));
  if (v.cols() < 1) throw DimensionError("build_reduced_design: V needs at least one column");
  ReducedDesign out{detail::right_reduced(data.designs(), v), v};
  for (Index i = 0; i < data.size(); ++i) {
    const MatrixXd xv = data.design(i) * v;
    const double scale = 1.0 + xv.cwiseAbs().maxCoeff();
    if ((out.matrix.row(i).transpose() - xv.reshaped()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw ValidationError("build_reduced_design: row " + std::to_string(i) + " mismatch");
  }
  return out;
}

/// (1/n) sum_i <X_i, estimate - truth>^2.
inline double in_sample_risk(const MatrixXd& estimate, const TraceRegressionDataset& data) {
  if (!data.truth()) throw PreconditionError("in_sample_risk: dataset has no ground truth");
  const VectorXd diff = data.predict(estimate - *data.truth());
  return diff.squaredNorm() / static_cast<double>(data.size());
}

inline double in_sample_risk(const CoefficientMatrix& estimate, const TraceRegressionDataset& data) {
  return in_sample_risk(estimate.values(), data);
}

}  // namespace tracelab

#endif  // TRACELAB_MODEL_HPP

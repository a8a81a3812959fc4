#ifndef TRACELAB_LINALG_HPP
#define TRACELAB_LINALG_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "tracelab/errors.hpp"

namespace tracelab {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Relative threshold below which a singular value counts as zero.
inline constexpr double kRankTolerance = 1e-10;

struct LeastSquaresSolution {
  VectorXd coef;
  Index rank = 0;
  bool rank_deficient = false;
};

/// Least squares via Householder QR. Falls back to the minimum-norm solution of
/// a complete orthogonal decomposition when R has a (numerically) zero pivot.
inline LeastSquaresSolution least_squares(const MatrixXd& a, const VectorXd& b) {
  if (a.rows() != b.size()) throw DimensionError("least_squares: row count mismatch");
  LeastSquaresSolution out;
  if (a.cols() == 0) {
    out.coef = VectorXd::Zero(0);
    return out;
  }
  if (a.rows() >= a.cols()) {
    Eigen::HouseholderQR<MatrixXd> qr(a);
    const auto& r = qr.matrixQR();
    const Index p = a.cols();
    double rmax = 0.0;
    for (Index i = 0; i < p; ++i) rmax = std::max(rmax, std::abs(r(i, i)));
    bool ok = rmax > 0.0;
    for (Index i = 0; ok && i < p; ++i)
      if (std::abs(r(i, i)) <= 1e-9 * rmax) ok = false;
    if (ok) {
      out.coef = qr.solve(b);
      out.rank = p;
      return out;
    }
  }
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod;
  cod.setThreshold(kRankTolerance);
  cod.compute(a);
  out.coef = cod.solve(b);
  out.rank = cod.rank();
  out.rank_deficient = out.rank < a.cols();
  return out;
}

/// Least squares through the Cholesky factor of A^T A, for the many small,
/// well-conditioned solves inside iterative solvers. Falls back to
/// least_squares() when the Gram matrix is singular or badly conditioned.
inline LeastSquaresSolution least_squares_normal(const MatrixXd& a, const VectorXd& b) {
  if (a.rows() != b.size()) throw DimensionError("least_squares_normal: row count mismatch");
  const Index p = a.cols();
  if (p > 0 && a.rows() >= p) {
    MatrixXd gram = MatrixXd::Zero(p, p);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() == Eigen::Success) {
      const VectorXd d = llt.matrixLLT().diagonal();
      const double hi = d.cwiseAbs().maxCoeff(), lo = d.cwiseAbs().minCoeff();
      // diag(L) ~ singular values of A; require cond(A) < 1e6
      if (lo > 1e-6 * hi) {
        LeastSquaresSolution out;
        out.coef = llt.solve(a.transpose() * b);
        out.rank = p;
        return out;
      }
    }
  }
  return least_squares(a, b);
}

/// Orthogonal projection of b onto the column space of a.
inline VectorXd project_onto_columns(const MatrixXd& a, const VectorXd& b) {
  if (a.cols() == 0) return VectorXd::Zero(b.size());
  return a * least_squares(a, b).coef;
}

inline Index numerical_rank(const VectorXd& singular_values, double rel_tol = kRankTolerance) {
  if (singular_values.size() == 0) return 0;
  const double top = singular_values.maxCoeff();
  if (top <= 0.0) return 0;
  Index k = 0;
  for (Index i = 0; i < singular_values.size(); ++i)
    if (singular_values[i] > rel_tol * top) ++k;
  return k;
}

inline Index numerical_rank(const MatrixXd& m, double rel_tol = kRankTolerance) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<MatrixXd> svd(m);
  return numerical_rank(svd.singularValues(), rel_tol);
}

inline double nuclear_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::BDCSVD<MatrixXd>(m).singularValues().sum();
}

inline double operator_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::BDCSVD<MatrixXd>(m).singularValues()(0);
}

/// Singular value soft-thresholding: U max(S - tau, 0) V^T.
inline MatrixXd svt(const MatrixXd& m, double tau) {
  if (tau < 0.0) throw PreconditionError("svt: tau must be nonnegative");
  if (m.size() == 0) return m;
  Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  VectorXd s = (svd.singularValues().array() - tau).max(0.0).matrix();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

struct TruncatedSvd {
  MatrixXd u;  // d1 x k
  VectorXd s;  // k
  MatrixXd v;  // d2 x k

  MatrixXd reconstruct() const { return u * s.asDiagonal() * v.transpose(); }
};

/// Top-k singular triplets (k clipped to min(rows, cols)).
inline TruncatedSvd top_svd(const MatrixXd& m, Index k) {
  Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  k = std::min<Index>(k, std::min(m.rows(), m.cols()));
  return {svd.matrixU().leftCols(k), svd.singularValues().head(k), svd.matrixV().leftCols(k)};
}

/// Orthonormal basis of the row space of m (columns of the result, d2 x rank).
inline MatrixXd row_space_basis(const MatrixXd& m, double rel_tol = kRankTolerance) {
  Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeThinV);
  const Index k = numerical_rank(svd.singularValues(), rel_tol);
  return svd.matrixV().leftCols(k);
}

/// Thin Q factor with diag(R) >= 0, so the factorization is unique.
inline MatrixXd orthonormalize(const MatrixXd& a) {
  Eigen::HouseholderQR<MatrixXd> qr(a);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j)
    if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace tracelab

#endif  // TRACELAB_LINALG_HPP

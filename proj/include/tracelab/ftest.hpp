#ifndef TRACELAB_FTEST_HPP
#define TRACELAB_FTEST_HPP

#include <limits>

#include <boost/math/distributions/fisher_f.hpp>

#include "tracelab/linalg.hpp"
#include "tracelab/model.hpp"

namespace tracelab {

struct FTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  Index df1 = 0, df2 = 0;
};

/// Classical F-test of all coefficients being zero in y = x b + e (no intercept).
/// df1 is the numerical rank of x, df2 = n - df1.
inline FTestResult f_test(const MatrixXd& x, const VectorXd& y) {
  if (x.rows() != y.size()) throw DimensionError("f_test: x and y disagree on n");
  const auto sol = least_squares(x, y);
  FTestResult out;
  out.df1 = sol.rank;
  out.df2 = x.rows() - sol.rank;
  if (out.df1 < 1 || out.df2 < 1) throw PreconditionError("f_test: need 1 <= rank(x) < n");
  const VectorXd fitted = x * sol.coef;
  const double ssr = (y - fitted).squaredNorm();
  const double explained = fitted.squaredNorm();
  if (ssr <= 0.0) {
    out.statistic = std::numeric_limits<double>::infinity();
    out.p_value = 0.0;
    return out;
  }
  out.statistic = (explained / static_cast<double>(out.df1)) / (ssr / static_cast<double>(out.df2));
  const boost::math::fisher_f dist(static_cast<double>(out.df1), static_cast<double>(out.df2));
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

/// Oracle F-test: regression of y on X_{V*}.
inline FTestResult oracle_f_test(const TraceRegressionDataset& data, const MatrixXd& v_star) {
  return f_test(detail::right_reduced(data.designs(), v_star), data.responses());
}

}  // namespace tracelab

#endif  // TRACELAB_FTEST_HPP

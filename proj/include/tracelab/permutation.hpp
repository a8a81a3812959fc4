#ifndef TRACELAB_PERMUTATION_HPP
#define TRACELAB_PERMUTATION_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "tracelab/errors.hpp"
#include "tracelab/estimators.hpp"
#include "tracelab/model.hpp"
#include "tracelab/parallel.hpp"
#include "tracelab/rng.hpp"

namespace tracelab {

/// A permutation of {0, ..., n-1} with its cycle structure.
///
/// Cycles are in standard representation: each cycle starts at its largest
/// element, and cycles are listed by increasing first element. position[i] is
/// the 1-based place m(i) of i inside its cycle. The index sets split [n] as
///   a1: m(i) odd and not the last element of its cycle
///   a2: m(i) even
///   a3: everything else (last elements of odd-length cycles, fixed points)
/// Within a1 (and within a2) the pairs (i, pi(i)) never share an index.
struct PermutationSpec {
  std::vector<Index> mapping;
  std::vector<std::vector<Index>> cycles;
  Index k = 0;
  std::vector<Index> position;
  std::vector<Index> a1, a2, a3;

  Index size() const { return static_cast<Index>(mapping.size()); }
  bool is_identity() const {
    for (std::size_t i = 0; i < mapping.size(); ++i)
      if (mapping[i] != static_cast<Index>(i)) return false;
    return true;
  }
};

inline PermutationSpec decompose(std::vector<Index> mapping) {
  const Index n = static_cast<Index>(mapping.size());
  std::vector<char> seen(mapping.size(), 0);
  for (Index v : mapping) {
    if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)])
      throw ValidationError("decompose: mapping is not a bijection on [n]");
    seen[static_cast<std::size_t>(v)] = 1;
  }
  PermutationSpec spec;
  spec.mapping = std::move(mapping);
  spec.position.assign(static_cast<std::size_t>(n), 0);
  std::vector<char> done(static_cast<std::size_t>(n), 0);
  // Scanning from the top, the first unvisited element is the largest of its cycle.
  for (Index start = n - 1; start >= 0; --start) {
    if (done[static_cast<std::size_t>(start)]) continue;
    std::vector<Index> cycle;
    for (Index i = start; !done[static_cast<std::size_t>(i)]; i = spec.mapping[static_cast<std::size_t>(i)]) {
      done[static_cast<std::size_t>(i)] = 1;
      cycle.push_back(i);
    }
    spec.cycles.push_back(std::move(cycle));
  }
  std::sort(spec.cycles.begin(), spec.cycles.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  spec.k = static_cast<Index>(spec.cycles.size());
  for (const auto& c : spec.cycles) {
    const Index len = static_cast<Index>(c.size());
    for (Index m = 1; m <= len; ++m) {
      const Index i = c[static_cast<std::size_t>(m - 1)];
      spec.position[static_cast<std::size_t>(i)] = m;
      if (m % 2 == 0)
        spec.a2.push_back(i);
      else if (m != len)
        spec.a1.push_back(i);
      else
        spec.a3.push_back(i);
    }
  }
  std::sort(spec.a1.begin(), spec.a1.end());
  std::sort(spec.a2.begin(), spec.a2.end());
  std::sort(spec.a3.begin(), spec.a3.end());
  return spec;
}

/// Inverse of decompose: each cycle element maps to the next, the last to the first.
inline std::vector<Index> compose(const std::vector<std::vector<Index>>& cycles, Index n) {
  std::vector<Index> mapping(static_cast<std::size_t>(n), -1);
  for (const auto& c : cycles) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      const Index from = c[j], to = c[(j + 1) % c.size()];
      if (from < 0 || from >= n || mapping[static_cast<std::size_t>(from)] != -1)
        throw ValidationError("compose: cycles do not partition [n]");
      mapping[static_cast<std::size_t>(from)] = to;
    }
  }
  for (Index v : mapping)
    if (v == -1) throw ValidationError("compose: cycles do not cover [n]");
  return mapping;
}

/// K(pi) <= (ln n)^2.
inline bool in_pi_tilde(const PermutationSpec& spec, Index n) {
  if (n < 2) throw PreconditionError("in_pi_tilde: n must be >= 2");
  const double ln = std::log(static_cast<double>(n));
  return static_cast<double>(spec.k) <= ln * ln;
}

/// count distinct, non-identity, uniformly random permutations (Fisher-Yates).
/// Throws after 1000 consecutive rejected draws.
inline std::vector<PermutationSpec> sample_permutations(Index n, Index count, std::uint64_t seed) {
  if (count < 1) throw PreconditionError("sample_permutations: count must be >= 1");
  if (n < 1) throw PreconditionError("sample_permutations: n must be >= 1");
  Engine rng = make_engine(seed, {stream_key("permutations")});
  std::set<std::vector<Index>> used;
  std::vector<PermutationSpec> out;
  out.reserve(static_cast<std::size_t>(count));
  std::vector<Index> base(static_cast<std::size_t>(n));
  std::iota(base.begin(), base.end(), Index{0});
  used.insert(base);  // the identity is excluded
  while (static_cast<Index>(out.size()) < count) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::vector<Index> p = base;
      for (Index i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<Index> pick(0, i);
        std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(pick(rng))]);
      }
      if (used.insert(p).second) {
        out.push_back(decompose(std::move(p)));
        placed = true;
      }
    }
    if (!placed)
      throw ValidationError("sample_permutations: could not draw " + std::to_string(count) +
                            " distinct non-identity permutations of " + std::to_string(n));
  }
  return out;
}

/// All n! permutations in lexicographic order (identity first). Test oracles only.
inline std::vector<std::vector<Index>> enumerate_permutations(Index n) {
  if (n < 1 || n > 8) throw SizeError("enumerate_permutations: needs 1 <= n <= 8");
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  std::vector<std::vector<Index>> out;
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

/// Lambda = sum_i fitted_i^2.
inline double test_statistic(const VectorXd& fitted) { return fitted.squaredNorm(); }

/// (y_{pi(1)}, ..., y_{pi(n)}).
inline VectorXd permute_responses(const VectorXd& y, const std::vector<Index>& mapping) {
  if (static_cast<Index>(mapping.size()) != y.size())
    throw DimensionError("permute_responses: permutation size differs from n");
  VectorXd out(y.size());
  for (Index i = 0; i < y.size(); ++i) out[i] = y[mapping[static_cast<std::size_t>(i)]];
  return out;
}

struct EstimatorOutput {
  VectorXd fitted;
  SolverDiagnostics diagnostics;
};

/// Fits on (X_i, y_i) and returns fitted values at the same X_i. The test feeds
/// it permuted responses with the designs untouched, so any such procedure is
/// equivariant in the required sense.
using PermutationEstimator = std::function<EstimatorOutput(const TraceRegressionDataset&)>;

struct PermutationTestReport {
  double lambda_id = 0.0;
  std::vector<double> lambda_perms;
  double p_value = 1.0;
  Index n_perms = 0;
  double alpha = 0.05;
  bool reject = false;
  SolverDiagnostics diagnostics;
};

/// p = (1 + #{Lambda(pi) >= Lambda(id)}) / (n_perms + 1); reject iff p <= alpha.
inline PermutationTestReport run_permutation_test(const TraceRegressionDataset& data,
                                                  const PermutationEstimator& estimator,
                                                  const std::vector<PermutationSpec>& perms, double alpha,
                                                  unsigned workers = 1) {
  if (perms.empty()) throw PreconditionError("run_permutation_test: no permutations");
  if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("run_permutation_test: alpha must be in (0,1)");
  PermutationTestReport rep;
  rep.alpha = alpha;
  rep.n_perms = static_cast<Index>(perms.size());
  rep.lambda_perms.assign(perms.size(), 0.0);
  std::vector<SolverDiagnostics> diags(perms.size() + 1);
  auto run_one = [&](std::size_t slot, const TraceRegressionDataset& d, const std::string& label) {
    try {
      auto out = estimator(d);
      if (out.fitted.size() != d.size()) throw EstimatorError("fitted vector has wrong length");
      diags[slot] = out.diagnostics;
      return test_statistic(out.fitted);
    } catch (const std::exception& e) {
      throw EstimatorError("estimator failed on " + label + ": " + e.what());
    }
  };
  rep.lambda_id = run_one(0, data, "the identity permutation");
  parallel_for(perms.size(), workers, [&](std::size_t k) {
    const auto y = permute_responses(data.responses(), perms[k].mapping);
    rep.lambda_perms[k] = run_one(k + 1, data.with_responses(y), "permutation index " + std::to_string(k));
  });
  Index count = 0;
  for (double l : rep.lambda_perms)
    if (l >= rep.lambda_id) ++count;
  rep.p_value = static_cast<double>(1 + count) / static_cast<double>(rep.n_perms + 1);
  rep.reject = rep.p_value <= alpha;
  for (const auto& d : diags) rep.diagnostics += d;
  return rep;
}

inline PermutationTestReport run_permutation_test(const TraceRegressionDataset& data,
                                                  const PermutationEstimator& estimator, Index n_perms,
                                                  double alpha, std::uint64_t seed, unsigned workers = 1) {
  return run_permutation_test(data, estimator, sample_permutations(data.size(), n_perms, seed), alpha, workers);
}

/// Exact p-value over all n! permutations: (1/n!) sum_pi 1{Lambda(id) <= Lambda(pi)}.
inline double exact_permutation_p_value(const TraceRegressionDataset& data, const PermutationEstimator& estimator) {
  const auto all = enumerate_permutations(data.size());
  const double base = test_statistic(estimator(data).fitted);
  Index count = 0;
  for (const auto& p : all) {
    const double l = test_statistic(estimator(data.with_responses(permute_responses(data.responses(), p))).fitted);
    if (base <= l) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(all.size());
}

// ---------------------------------------------------------------------------
// Ready-made statistics
// ---------------------------------------------------------------------------

inline PermutationEstimator am_statistic(AmConfig cfg) {
  return [cfg = std::move(cfg)](const TraceRegressionDataset& d) {
    auto fit = fit_am(d, cfg);
    return EstimatorOutput{d.predict(fit.estimate.values()), fit.diagnostics};
  };
}

inline PermutationEstimator oracle_ls_statistic(MatrixXd v_star) {
  return [v = std::move(v_star)](const TraceRegressionDataset& d) {
    auto fit = fit_oracle_ls(d, v);
    return EstimatorOutput{d.predict(fit.estimate.values()), fit.diagnostics};
  };
}

inline PermutationEstimator nn_statistic(NnConfig cfg) {
  return [cfg](const TraceRegressionDataset& d) {
    auto fit = fit_nn(d, cfg);
    return EstimatorOutput{d.predict(fit.estimate.values()), fit.diagnostics};
  };
}

}  // namespace tracelab

#endif  // TRACELAB_PERMUTATION_HPP

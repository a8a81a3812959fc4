#ifndef TRACELAB_SERIALIZATION_HPP
#define TRACELAB_SERIALIZATION_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "tracelab/errors.hpp"
#include "tracelab/model.hpp"

namespace tracelab {

/// Shortest-safe decimal for a double: 17 significant digits round-trip exactly.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& token) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = first + token.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw FormatError("not a number: '" + token + "'");
  return v;
}

// Text layout:
//   d1 d2 n
//   n blocks of d1 lines with d2 values each (design matrices, row by row)
//   n lines with one response each
// Ground truth is not part of the format.
inline void write_dataset(std::ostream& os, const TraceRegressionDataset& data) {
  const Index d1 = data.d1(), d2 = data.d2(), n = data.size();
  os << d1 << ' ' << d2 << ' ' << n << '\n';
  for (Index i = 0; i < n; ++i) {
    const auto x = data.design(i);
    for (Index r = 0; r < d1; ++r) {
      for (Index c = 0; c < d2; ++c) {
        if (c) os << ' ';
        os << format_double(x(r, c));
      }
      os << '\n';
    }
  }
  for (Index i = 0; i < n; ++i) os << format_double(data.responses()[i]) << '\n';
  if (!os) throw FormatError("write_dataset: stream error");
}

inline TraceRegressionDataset read_dataset(std::istream& is) {
  long long d1 = 0, d2 = 0, n = 0;
  if (!(is >> d1 >> d2 >> n)) throw FormatError("read_dataset: missing header 'd1 d2 n'");
  if (d1 <= 0 || d2 <= 0 || n <= 0) throw FormatError("read_dataset: header values must be positive");
  MatrixXd stacked(d1 * d2, n);
  std::string tok;
  auto next = [&](const char* what) {
    if (!(is >> tok)) throw FormatError(std::string("read_dataset: truncated input while reading ") + what);
    return parse_double(tok);
  };
  for (Index i = 0; i < n; ++i) {
    Eigen::Map<MatrixXd> x(stacked.col(i).data(), d1, d2);
    for (Index r = 0; r < d1; ++r)
      for (Index c = 0; c < d2; ++c) x(r, c) = next("designs");
  }
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = next("responses");
  if (is >> tok) throw FormatError("read_dataset: trailing data after responses");
  return TraceRegressionDataset(std::make_shared<const DesignStack>(d1, d2, std::move(stacked)),
                                std::move(y));
}

inline void save_dataset(const std::string& path, const TraceRegressionDataset& data) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  write_dataset(os, data);
}

inline TraceRegressionDataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path + "' for reading");
  return read_dataset(is);
}

}  // namespace tracelab

#endif  // TRACELAB_SERIALIZATION_HPP

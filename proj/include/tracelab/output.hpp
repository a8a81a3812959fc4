#ifndef TRACELAB_OUTPUT_HPP
#define TRACELAB_OUTPUT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tracelab/experiment.hpp"
#include "tracelab/serialization.hpp"

namespace tracelab {

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

/// Splits a CSV document into records. Quoted fields may contain commas,
/// doubled quotes and line breaks.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& is) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  char ch;
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
  };
  while (is.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (is.peek() == '"') {
          is.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\n') {
      end_field();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (ch != '\r') {
      field += ch;
    }
  }
  if (quoted) throw FormatError("csv: unterminated quoted field");
  if (any) {
    end_field();
    rows.push_back(std::move(row));
  }
  return rows;
}

inline const char* kTableColumns[] = {"mode", "r_star", "estimator", "snr", "value",
                                      "reps", "failures", "tuning", "config_hash"};

inline void write_table_csv(std::ostream& os, const ResultTable& t) {
  for (std::size_t k = 0; k < std::size(kTableColumns); ++k) os << (k ? "," : "") << kTableColumns[k];
  os << '\n';
  for (const auto& c : t.cells)
    os << to_string(t.mode) << ',' << c.r_star << ',' << csv_field(c.estimator) << ',' << format_double(c.snr) << ','
       << format_double(c.value) << ',' << c.reps << ',' << c.failures << ',' << csv_field(c.tuning) << ','
       << t.config_hash << '\n';
}

inline ResultTable read_table_csv(std::istream& is) {
  const auto rows = parse_csv(is);
  if (rows.empty()) throw FormatError("table csv: empty input");
  const auto& header = rows.front();
  if (header.size() != std::size(kTableColumns) ||
      !std::equal(header.begin(), header.end(), std::begin(kTableColumns)))
    throw FormatError("table csv: unexpected header");
  ResultTable t;
  auto to_index = [](const std::string& s) {
    try {
      std::size_t used = 0;
      const long v = std::stol(s, &used);
      if (used != s.size()) throw FormatError("");
      return static_cast<Index>(v);
    } catch (const std::exception&) {
      throw FormatError("table csv: '" + s + "' is not an integer");
    }
  };
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& r = rows[k];
    if (r.size() != std::size(kTableColumns))
      throw FormatError("table csv: record " + std::to_string(k) + " has " + std::to_string(r.size()) + " fields");
    const ExperimentMode mode = r[0] == "estimation" ? ExperimentMode::estimation
                                : r[0] == "inference" ? ExperimentMode::inference
                                : r[0] == "theory"    ? ExperimentMode::theory
                                                      : throw FormatError("table csv: bad mode '" + r[0] + "'");
    ResultCell c;
    c.r_star = to_index(r[1]);
    c.estimator = r[2];
    c.snr = parse_double(r[3]);
    c.value = parse_double(r[4]);
    c.reps = to_index(r[5]);
    c.failures = to_index(r[6]);
    c.tuning = r[7];
    if (k == 1) {
      t.mode = mode;
      t.config_hash = r[8];
    } else if (mode != t.mode || r[8] != t.config_hash) {
      throw FormatError("table csv: mixed tables in one file");
    }
    if (std::find(t.ranks.begin(), t.ranks.end(), c.r_star) == t.ranks.end()) t.ranks.push_back(c.r_star);
    if (std::find(t.estimators.begin(), t.estimators.end(), c.estimator) == t.estimators.end())
      t.estimators.push_back(c.estimator);
    if (std::find(t.snrs.begin(), t.snrs.end(), c.snr) == t.snrs.end()) t.snrs.push_back(c.snr);
    t.cells.push_back(std::move(c));
  }
  return t;
}

inline ResultTable load_table_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  try {
    return read_table_csv(is);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

/// Equality of everything table.csv records (raw values excluded).
inline bool same_table(const ResultTable& a, const ResultTable& b) {
  auto same_value = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  if (a.mode != b.mode || a.ranks != b.ranks || a.estimators != b.estimators || a.snrs != b.snrs ||
      a.config_hash != b.config_hash || a.cells.size() != b.cells.size())
    return false;
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    const auto &x = a.cells[k], &y = b.cells[k];
    if (x.r_star != y.r_star || x.estimator != y.estimator || x.snr != y.snr || !same_value(x.value, y.value) ||
        x.reps != y.reps || x.failures != y.failures || x.tuning != y.tuning)
      return false;
  }
  return true;
}

/// One line per replication value: r_star,estimator,snr,rep,value.
inline void write_raw_csv(std::ostream& os, const ResultTable& t) {
  os << "r_star,estimator,snr,rep,value\n";
  for (const auto& c : t.cells)
    for (std::size_t k = 0; k < c.raw.size(); ++k)
      os << c.r_star << ',' << csv_field(c.estimator) << ',' << format_double(c.snr) << ',' << k << ','
         << format_double(c.raw[k]) << '\n';
}

// ---------------------------------------------------------------------------
// Markdown: r* blocks of estimator rows, one column per SNR
// ---------------------------------------------------------------------------

inline std::string short_number(double x, const char* fmt = "%.2f") {
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, x);
  return buf;
}

inline void write_table_md(std::ostream& os, const ResultTable& t) {
  os << "| r* | " << (t.mode == ExperimentMode::inference ? "Test" : "Estimator") << " |";
  for (double s : t.snrs) os << ' ' << format_double(s) << " |";
  os << "\n|---|---|";
  for (std::size_t k = 0; k < t.snrs.size(); ++k) os << "---|";
  os << '\n';
  for (Index r : t.ranks) {
    bool first = true;
    for (const auto& e : t.estimators) {
      os << "| " << (first ? std::to_string(r) : "") << " | " << e << " |";
      first = false;
      for (double s : t.snrs) {
        const auto& c = t.at(r, e, s);
        if (c.valid()) os << ' ' << short_number(c.value) << " |";
        else os << " NA (" << c.failures << " failed) |";
      }
      os << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// SVG: one panel per r*, one polyline per estimator, value against SNR
// ---------------------------------------------------------------------------

inline void write_svg_plot(std::ostream& os, const ResultTable& t) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b", "#e377c2", "#17becf", "#7f7f7f"};
  const double pw = 260, ph = 200, ml = 50, mt = 30, gap = 30, legend = 110;
  const double width = ml + static_cast<double>(t.ranks.size()) * (pw + gap) + legend;
  const double height = mt + ph + 50;
  double xmax = 0.0, ymax = t.mode == ExperimentMode::inference ? 1.0 : 0.0;
  for (double s : t.snrs) xmax = std::max(xmax, s);
  for (const auto& c : t.cells)
    if (std::isfinite(c.value)) ymax = std::max(ymax, c.value);
  if (xmax <= 0.0) xmax = 1.0;
  if (ymax <= 0.0) ymax = 1.0;
  const double xmin = std::min(0.0, t.snrs.empty() ? 0.0 : *std::min_element(t.snrs.begin(), t.snrs.end()));
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const std::string ylabel = t.mode == ExperimentMode::inference ? "rejection rate" : "in-sample risk";
  for (std::size_t p = 0; p < t.ranks.size(); ++p) {
    const double x0 = ml + static_cast<double>(p) * (pw + gap), y0 = mt;
    auto sx = [&](double s) { return x0 + (s - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double v) { return y0 + ph - v / ymax * ph; };
    os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 - 10 << "\" text-anchor=\"middle\">r* = " << t.ranks[p]
       << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
      const double v = ymax * k / 4.0;
      os << "<text x=\"" << x0 - 4 << "\" y=\"" << sy(v) + 4 << "\" text-anchor=\"end\">" << short_number(v)
         << "</text>\n";
      const double s = xmin + (xmax - xmin) * k / 4.0;
      os << "<text x=\"" << sx(s) << "\" y=\"" << y0 + ph + 14 << "\" text-anchor=\"middle\">" << short_number(s)
         << "</text>\n";
    }
    os << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 + ph + 32 << "\" text-anchor=\"middle\">SNR</text>\n";
    if (p == 0)
      os << "<text transform=\"translate(12," << y0 + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel
         << "</text>\n";
    for (std::size_t e = 0; e < t.estimators.size(); ++e) {
      std::string pts;
      for (double s : t.snrs) {
        const auto& c = t.at(t.ranks[p], t.estimators[e], s);
        if (!std::isfinite(c.value)) continue;
        pts += short_number(sx(s)) + "," + short_number(sy(c.value)) + " ";
      }
      os << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << palette[e % std::size(palette)]
         << "\" points=\"" << pts << "\"/>\n";
    }
  }
  const double lx = ml + static_cast<double>(t.ranks.size()) * (pw + gap);
  for (std::size_t e = 0; e < t.estimators.size(); ++e) {
    const double ly = mt + 10 + 16.0 * static_cast<double>(e);
    os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 18 << "\" y2=\"" << ly << "\" stroke=\""
       << palette[e % std::size(palette)] << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << lx + 24 << "\" y=\"" << ly + 4 << "\">" << t.estimators[e] << "</text>\n";
  }
  os << "</svg>\n";
}

// ---------------------------------------------------------------------------

namespace detail {

template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  w(os);
  os.flush();
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

/// table.csv, table.md, table.svg, raw.csv and config.resolved under dir.
inline void emit_outputs(const ResultTable& t, const std::filesystem::path& dir, const std::string& resolved_config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  detail::write_file(dir / "table.csv", [&](std::ostream& os) { write_table_csv(os, t); });
  detail::write_file(dir / "table.md", [&](std::ostream& os) { write_table_md(os, t); });
  detail::write_file(dir / "table.svg", [&](std::ostream& os) { write_svg_plot(os, t); });
  detail::write_file(dir / "raw.csv", [&](std::ostream& os) { write_raw_csv(os, t); });
  detail::write_file(dir / "config.resolved", [&](std::ostream& os) {
    os << resolved_config << "config_hash = " << t.config_hash << '\n';
  });
}

}  // namespace tracelab

#endif  // TRACELAB_OUTPUT_HPP

#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "qst/errors.hpp"

namespace qst {

/// Shortest decimal form that round-trips a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_double(r[i]);
    os << '\n';
  }
}

inline void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                           const std::vector<std::vector<double>>& rows) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  write_csv(f, header, rows);
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = a;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i)
    v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

/// Cumulative trapezoid of samples y on grid t, starting from `start`.
inline std::vector<double> cumulative_trapezoid(const std::vector<double>& t,
                                                const std::vector<double>& y,
                                                double start = 0.0) {
  std::vector<double> out(t.size());
  if (t.empty()) return out;
  out[0] = start;
  double acc = start;
  for (std::size_t i = 1; i < t.size(); ++i) {
    acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
    out[i] = acc;
  }
  return out;
}

}  // namespace qst

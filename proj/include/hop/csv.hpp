#pragma once

// Returns-panel CSV: first row is the ticker header, each following row holds
// one period of simple returns. Comma separated, '.' decimal point, LF line
// endings, UTF-8. Numbers are written with shortest round-trip precision.

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "hop/types.hpp"

namespace hop {

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline ReturnsMatrix read_returns_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "': empty file, header row missing");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  ReturnsMatrix r;
  for (std::string_view f : detail::split_fields(line)) {
    if (f.empty())
      throw DataError("'" + path + "': line 1, column " +
                      std::to_string(r.tickers.size() + 1) + ": empty ticker");
    r.tickers.emplace_back(f);
  }
  const int n = static_cast<int>(r.tickers.size());

  std::vector<double> cells;
  int rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    auto fields = detail::split_fields(line);
    if (static_cast<int>(fields.size()) != n)
      throw DataError("'" + path + "': line " + std::to_string(line_no) + ": expected " +
                      std::to_string(n) + " fields, got " + std::to_string(fields.size()));
    for (int j = 0; j < n; ++j) {
      std::string_view f = fields[j];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v))
        throw DataError("'" + path + "': line " + std::to_string(line_no) + ", column " +
                        std::to_string(j + 1) + ": malformed number '" + std::string(f) + "'");
      cells.push_back(v);
    }
    ++rows;
  }
  if (rows < 2)
    throw DimensionError("'" + path + "': need at least 2 data rows, got " + std::to_string(rows));

  r.values.resize(rows, n);
  for (int t = 0; t < rows; ++t)
    for (int j = 0; j < n; ++j) r.values(t, j) = cells[static_cast<std::size_t>(t) * n + j];
  return r;
}

inline void write_returns_csv(const ReturnsMatrix& r, const std::string& path) {
  validate_returns(r);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);  // binary: keep LF on any platform
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (int j = 0; j < r.assets(); ++j) {
    if (j) out << ',';
    out << r.tickers[j];
  }
  out << '\n';
  char buf[64];
  for (int t = 0; t < r.periods(); ++t) {
    for (int j = 0; j < r.assets(); ++j) {
      if (j) out << ',';
      auto res = std::to_chars(buf, buf + sizeof buf, r.values(t, j));
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace hop

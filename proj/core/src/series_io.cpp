#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "tsvat/error.hpp"
#include "tsvat/series.hpp"

namespace tsvat::ts {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream row(line);
  while (std::getline(row, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_real(const std::string& cell, std::size_t line_no) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    fail(ErrorCode::ParseError,
         "line " + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
  }
  return value;
}

}  // namespace

TimeSeries read_series_csv(std::istream& in, std::string name) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  require(line_no > 0 && !trim(line).empty(), ErrorCode::ParseError, "missing header row");
  std::vector<std::string> header = split_row(line);
  for (const auto& h : header) {
    require(!h.empty(), ErrorCode::ParseError, "empty channel name in header");
  }
  const std::size_t channels = header.size();

  std::vector<double> flat;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    require(cells.size() == channels, ErrorCode::ParseError,
            "line " + std::to_string(line_no) + ": expected " + std::to_string(channels) +
                " cells, found " + std::to_string(cells.size()));
    for (const auto& cell : cells) flat.push_back(parse_real(cell, line_no));
    ++rows;
  }
  require(rows > 0, ErrorCode::ParseError, "no data rows");
  Matrix values = Eigen::Map<Matrix>(flat.data(), static_cast<Index>(rows),
                                     static_cast<Index>(channels));
  TimeSeries ts{std::move(name), std::move(values), std::nullopt, std::move(header)};
  try {
    ts.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ParseError, e.what());
  }
  return ts;
}

TimeSeries read_series_csv_file(const std::string& path, std::string name) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open " + path);
  if (name.empty()) name = path;
  return read_series_csv(in, std::move(name));
}

void write_series_csv(std::ostream& out, const TimeSeries& series) {
  for (std::size_t c = 0; c < series.channel_names.size(); ++c) {
    if (c) out << ',';
    out << series.channel_names[c];
  }
  out << '\n';
  char buf[32];
  for (Index t = 0; t < series.length(); ++t) {
    for (Index c = 0; c < series.channels(); ++c) {
      if (c) out << ',';
      // %.17g is the shortest format guaranteed to round-trip a double.
      std::snprintf(buf, sizeof buf, "%.17g", series.values(t, c));
      out << buf;
    }
    out << '\n';
  }
}

void write_series_csv_file(const std::string& path, const TimeSeries& series) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot write " + path);
  write_series_csv(out, series);
  require(out.good(), ErrorCode::IoError, "write failed for " + path);
}

}  // namespace tsvat::ts

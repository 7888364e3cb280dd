#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mcpst/dataio.hpp"

namespace mcpst::data {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double parse_timestamp(std::string_view text) {
  const std::string s(text);
  double numeric = 0.0;
  if (parse_number(s, numeric)) return numeric;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0.0;
  char sep = 0;
  const int got = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &sec);
  const bool date_only = got == 3;
  if (!date_only && (got < 6 || (sep != ' ' && sep != 'T'))) {
    throw DataError("unrecognised timestamp '" + s + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw DataError("invalid date in timestamp '" + s + "'");
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days) * 1440.0 + h * 60.0 + mi + sec / 60.0;
}

std::string format_timestamp(double minutes) {
  const auto total = static_cast<long long>(std::llround(minutes * 60.0));
  long long days = total / 86400;
  long long rem = total % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:%02lld:%02lld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), rem / 3600,
                (rem / 60) % 60, rem % 60);
  return buf;
}

TrafficSeries load_series(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  const auto header = split_row(line);
  if (header.size() < 2 || header[0] != "timestamp") {
    throw DataError("'" + path.string() + "': header must be timestamp,node0,...");
  }
  const std::size_t n = header.size() - 1;

  std::vector<double> times;
  std::vector<double> values;
  std::vector<std::string> bad;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = split_row(line);
    if (cells.size() != n + 1) {
      throw DataError("'" + path.string() + "' row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " cells, expected " + std::to_string(n + 1));
    }
    times.push_back(parse_timestamp(cells[0]));
    for (std::size_t j = 0; j < n; ++j) {
      double v = 0.0;
      if (!parse_number(cells[j + 1], v)) {
        bad.push_back("(row " + std::to_string(row) + ", " + header[j + 1] + ")");
        v = 0.0;
      }
      values.push_back(v);
    }
  }
  if (!bad.empty()) {
    std::string msg = "'" + path.string() + "' has " + std::to_string(bad.size()) +
                      " missing or non-numeric cells:";
    for (std::size_t i = 0; i < bad.size() && i < 10; ++i) msg += " " + bad[i];
    if (bad.size() > 10) msg += " ...";
    throw DataError(msg);
  }
  if (times.empty()) throw DataError("'" + path.string() + "' has no data rows");

  TrafficSeries s;
  s.values = Tensor({times.size(), n}, std::move(values));
  s.start_minutes = times[0];
  if (times.size() >= 2) {
    s.interval_minutes = times[1] - times[0];
    for (std::size_t i = 1; i < times.size(); ++i) {
      const double step = times[i] - times[i - 1];
      if (!(step > 0.0)) {
        throw DataError("'" + path.string() + "': timestamps not increasing at row " +
                        std::to_string(i + 1));
      }
      if (std::abs(step - s.interval_minutes) > 1e-6 * s.interval_minutes) {
        throw DataError("'" + path.string() + "': uneven spacing at row " + std::to_string(i + 1));
      }
    }
  }
  return s;
}

void save_series(const std::filesystem::path& path, const TrafficSeries& series) {
  std::ofstream out = open_output(path);
  out << "timestamp";
  for (std::size_t j = 0; j < series.nodes(); ++j) out << ",node" << j;
  out << '\n';
  for (std::size_t t = 0; t < series.steps(); ++t) {
    out << format_timestamp(series.start_minutes + static_cast<double>(t) * series.interval_minutes);
    for (std::size_t j = 0; j < series.nodes(); ++j) out << ',' << fmt(mat(series.values, t, j));
    out << '\n';
  }
}

std::vector<graph::Edge> load_edges(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  const auto header = split_row(line);
  if (header.size() != 3 || header[0] != "src" || header[1] != "dst" || header[2] != "weight") {
    throw DataError("'" + path.string() + "': header must be src,dst,weight");
  }
  std::vector<graph::Edge> edges;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = split_row(line);
    double src = 0, dst = 0, w = 0;
    if (cells.size() != 3 || !parse_number(cells[0], src) || !parse_number(cells[1], dst) ||
        !parse_number(cells[2], w) || src < 0 || dst < 0 || src != std::floor(src) ||
        dst != std::floor(dst)) {
      throw DataError("'" + path.string() + "' row " + std::to_string(row) + " is malformed");
    }
    edges.push_back({static_cast<std::size_t>(src), static_cast<std::size_t>(dst), w});
  }
  return edges;
}

void save_edges(const std::filesystem::path& path, const graph::TrafficNetwork& net) {
  std::ofstream out = open_output(path);
  out << "src,dst,weight\n";
  const Tensor& a = net.adjacency();
  for (std::size_t i = 0; i < net.n_nodes(); ++i) {
    for (std::size_t j = 0; j < net.n_nodes(); ++j) {
      // Both directions are written so that reloading reproduces the adjacency exactly.
      if (mat(a, i, j) == 0.0) continue;
      out << i << ',' << j << ',' << fmt(mat(a, i, j)) << '\n';
    }
  }
}

}  // namespace mcpst::data

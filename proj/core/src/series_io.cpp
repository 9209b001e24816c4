#include "tubo/series_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tubo {

namespace {

std::string trimmed(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
  throw Error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

DmSeries load_series(const std::string& path, SeriesFormat format) {
  if (format != SeriesFormat::DmCsv) throw Error("load_series: unknown format");
  std::ifstream in(path);
  if (!in) throw Error("load_series: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file, expected header");
  int nodes = 0, gran = 0;
  if (std::sscanf(line.c_str(), "# nodes=%d granularity_min=%d", &nodes, &gran) != 2)
    parse_fail(path, 1, "malformed header, expected '# nodes=N granularity_min=G'");
  if (nodes < 1) parse_fail(path, 1, "nodes must be >= 1");
  if (gran < 1) parse_fail(path, 1, "granularity_min must be >= 1");

  DmSeries series(nodes, gran);
  const size_t cells = size_t(nodes) * nodes;
  std::vector<double> row(cells);
  std::vector<uint8_t> mask(cells);

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trimmed(line).empty() && in.peek() == EOF) break;  // trailing newline
    size_t cell = 0;
    size_t pos = 0;
    while (true) {
      size_t comma = line.find(',', pos);
      std::string tok = trimmed(comma == std::string::npos
                                    ? line.substr(pos)
                                    : line.substr(pos, comma - pos));
      if (cell >= cells)
        parse_fail(path, lineno, "too many cells, expected " + std::to_string(cells));
      if (tok.empty()) {
        mask[cell] = 0;
        row[cell] = 0.0;
      } else {
        char* end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
          parse_fail(path, lineno, "cell " + std::to_string(cell) + " is not a number: '" + tok + "'");
        if (!std::isfinite(v))
          parse_fail(path, lineno, "cell " + std::to_string(cell) + " is not finite");
        if (v < 0.0)
          parse_fail(path, lineno, "cell " + std::to_string(cell) + " is a negative demand");
        mask[cell] = 1;
        row[cell] = v;
      }
      ++cell;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cell != cells)
      parse_fail(path, lineno, "row has " + std::to_string(cell) + " cells, expected " +
                                   std::to_string(cells));
    series.push_epoch(row, mask);
  }
  if (series.epochs() < 1) parse_fail(path, lineno, "no epochs in file");
  return series;
}

void save_series(const DmSeries& series, const std::string& path, SeriesFormat format) {
  if (format != SeriesFormat::DmCsv) throw Error("save_series: unknown format");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_series: cannot open " + path + " for writing");
  out << "# nodes=" << series.nodes()
      << " granularity_min=" << series.granularity_minutes() << "\n";
  char buf[64];
  for (int t = 0; t < series.epochs(); ++t) {
    for (int i = 0; i < series.nodes(); ++i) {
      for (int j = 0; j < series.nodes(); ++j) {
        if (i != 0 || j != 0) out << ',';
        if (series.present(t, i, j)) {
          std::snprintf(buf, sizeof(buf), "%.6f", series.value(t, i, j));
          out << buf;
        }
      }
    }
    out << "\n";
  }
  if (!out) throw Error("save_series: write failed for " + path);
}

Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_topology: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("load_topology: " + path + ": " + e.what());
  }
  Topology topo;
  topo.node_count = j.at("nodes").get<int>();
  for (const auto& lj : j.at("links")) {
    Link l;
    l.src = lj.at("src").get<int>();
    l.dst = lj.at("dst").get<int>();
    l.capacity_mbps = lj.at("capacity_mbps").get<double>();
    l.latency = lj.at("latency").get<double>();
    topo.links.push_back(l);
  }
  topo.validate();
  return topo;
}

void save_topology(const Topology& topo, const std::string& path) {
  nlohmann::json j;
  j["nodes"] = topo.node_count;
  j["links"] = nlohmann::json::array();
  for (const Link& l : topo.links)
    j["links"].push_back({{"src", l.src},
                          {"dst", l.dst},
                          {"capacity_mbps", l.capacity_mbps},
                          {"latency", l.latency}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_topology: cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

}  // namespace tubo

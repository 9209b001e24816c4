#ifndef TUBO_SERIES_IO_HPP
#define TUBO_SERIES_IO_HPP

#include <string>

#include "tubo/types.hpp"

namespace tubo {

enum class SeriesFormat { DmCsv };

/// Reads a dm-csv file: line 1 is `# nodes=N granularity_min=G`, every
/// following line is one epoch of N*N comma-separated Mbps cells in row-major
/// order. An empty cell is a missing value. Parse errors name the offending
/// line.
DmSeries load_series(const std::string& path, SeriesFormat format = SeriesFormat::DmCsv);

/// Writes dm-csv with 6 decimal digits; missing cells are written empty.
void save_series(const DmSeries& series, const std::string& path,
                 SeriesFormat format = SeriesFormat::DmCsv);

/// Topology JSON: {"nodes": N, "links": [{"src","dst","capacity_mbps","latency"}]}.
Topology load_topology(const std::string& path);
void save_topology(const Topology& topo, const std::string& path);

}  // namespace tubo

#endif  // TUBO_SERIES_IO_HPP

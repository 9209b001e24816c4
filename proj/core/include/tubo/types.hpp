#ifndef TUBO_TYPES_HPP
#define TUBO_TYPES_HPP

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tubo {

/// Thrown for malformed inputs, bad arguments and file-format violations.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Directed capacitated link. Latency is a nonnegative routing weight.
struct Link {
  int src = 0;
  int dst = 0;
  double capacity_mbps = 0.0;
  double latency = 0.0;
};

/// Directed capacitated graph. Node ids are [0, node_count); the graph may be
/// asymmetric and may contain parallel links.
struct Topology {
  int node_count = 0;
  std::vector<Link> links;

  void validate() const;
};

/// One N x N demand snapshot in Mbps, row-major (source-major). Diagonal
/// entries are always zero; traffic is directional, values[i][j] need not
/// equal values[j][i].
struct DemandMatrix {
  int nodes = 0;
  int epoch = 0;
  std::vector<double> values;  // nodes*nodes, row-major

  DemandMatrix() = default;
  DemandMatrix(int n, int t) : nodes(n), epoch(t), values(size_t(n) * n, 0.0) {}

  double at(int i, int j) const { return values[size_t(i) * nodes + j]; }
  double& at(int i, int j) { return values[size_t(i) * nodes + j]; }
};

/// A sequence of demand matrices over T consecutive epochs with a
/// presence mask. Masked-out cells hold a NaN sentinel so that any code
/// reading them as data poisons its result instead of silently using 0.
///
/// Immutable after load in normal use; push_epoch exists for the single
/// writer that accumulates measurements in the online pipeline.
class DmSeries {
 public:
  DmSeries() = default;
  DmSeries(int nodes, int granularity_minutes)
      : nodes_(nodes), granularity_min_(granularity_minutes) {}

  int epochs() const { return epochs_; }
  int nodes() const { return nodes_; }
  int granularity_minutes() const { return granularity_min_; }

  bool present(int t, int i, int j) const { return present_[idx(t, i, j)] != 0; }
  /// Raw cell; NaN where not present.
  double value(int t, int i, int j) const { return values_[idx(t, i, j)]; }

  /// Appends one epoch. `row` has nodes*nodes cells, `mask` marks present
  /// cells; diagonal is forced to zero and present.
  void push_epoch(const std::vector<double>& row, const std::vector<uint8_t>& mask);
  void push_epoch(const DemandMatrix& dm);

  DemandMatrix matrix_at(int t) const;

  static double sentinel() { return std::numeric_limits<double>::quiet_NaN(); }

 private:
  size_t idx(int t, int i, int j) const {
    return (size_t(t) * nodes_ + i) * nodes_ + j;
  }
  int nodes_ = 0;
  int epochs_ = 0;
  int granularity_min_ = 5;
  std::vector<double> values_;
  std::vector<uint8_t> present_;
};

/// View over w consecutive matrices of a series ending at epoch `end`.
/// Offsets run [0, length), offset k maps to epoch end - length + 1 + k.
struct Window {
  const DmSeries* series = nullptr;
  int end_epoch = 0;
  int length = 0;

  int epoch_of(int k) const { return end_epoch - length + 1 + k; }
  bool present(int k, int i, int j) const {
    return series->present(epoch_of(k), i, j);
  }
  double value(int k, int i, int j) const {
    return series->value(epoch_of(k), i, j);
  }
};

/// Contiguous-in-time train/test partition.
struct SplitSpec {
  double train_fraction = 0.6;
};

/// First floor(T*f) epochs become train, remainder test. Masks carry through.
std::pair<DmSeries, DmSeries> split(const DmSeries& series, const SplitSpec& spec);

/// Window of length w ending at epoch s. Throws on out-of-range arguments.
Window window_at(const DmSeries& series, int s, int w);

}  // namespace tubo

#endif  // TUBO_TYPES_HPP

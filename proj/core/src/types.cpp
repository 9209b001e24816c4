#include "tubo/types.hpp"

#include <cmath>

namespace tubo {

void Topology::validate() const {
  if (node_count <= 0) throw Error("topology: node_count must be positive");
  for (size_t k = 0; k < links.size(); ++k) {
    const Link& l = links[k];
    if (l.src < 0 || l.src >= node_count || l.dst < 0 || l.dst >= node_count)
      throw Error("topology: link " + std::to_string(k) + " has node id out of range");
    if (l.src == l.dst)
      throw Error("topology: link " + std::to_string(k) + " is a self-loop");
    if (!(l.capacity_mbps > 0.0))
      throw Error("topology: link " + std::to_string(k) + " capacity must be > 0");
    if (l.latency < 0.0 || !std::isfinite(l.latency))
      throw Error("topology: link " + std::to_string(k) + " latency must be finite and >= 0");
  }
}

void DmSeries::push_epoch(const std::vector<double>& row,
                          const std::vector<uint8_t>& mask) {
  const size_t cells = size_t(nodes_) * nodes_;
  if (row.size() != cells || mask.size() != cells)
    throw Error("push_epoch: row/mask size mismatch");
  values_.reserve(values_.size() + cells);
  present_.reserve(present_.size() + cells);
  for (int i = 0; i < nodes_; ++i) {
    for (int j = 0; j < nodes_; ++j) {
      const size_t c = size_t(i) * nodes_ + j;
      if (i == j) {
        values_.push_back(0.0);
        present_.push_back(1);
      } else if (mask[c]) {
        values_.push_back(row[c]);
        present_.push_back(1);
      } else {
        values_.push_back(sentinel());
        present_.push_back(0);
      }
    }
  }
  ++epochs_;
}

void DmSeries::push_epoch(const DemandMatrix& dm) {
  if (dm.nodes != nodes_) throw Error("push_epoch: node count mismatch");
  std::vector<uint8_t> all(size_t(nodes_) * nodes_, 1);
  push_epoch(dm.values, all);
}

DemandMatrix DmSeries::matrix_at(int t) const {
  if (t < 0 || t >= epochs_) throw Error("matrix_at: epoch out of range");
  DemandMatrix dm(nodes_, t);
  for (int i = 0; i < nodes_; ++i)
    for (int j = 0; j < nodes_; ++j)
      dm.at(i, j) = present(t, i, j) ? value(t, i, j) : 0.0;
  return dm;
}

std::pair<DmSeries, DmSeries> split(const DmSeries& series, const SplitSpec& spec) {
  const int t = series.epochs();
  if (t < 2) throw Error("split: need at least 2 epochs, got " + std::to_string(t));
  if (t * spec.train_fraction < 1.0 || t * (1.0 - spec.train_fraction) < 1.0)
    throw Error("split: fraction " + std::to_string(spec.train_fraction) +
                " leaves an empty partition for T=" + std::to_string(t));
  const int n_train = int(std::floor(t * spec.train_fraction));

  DmSeries train(series.nodes(), series.granularity_minutes());
  DmSeries test(series.nodes(), series.granularity_minutes());
  const size_t cells = size_t(series.nodes()) * series.nodes();
  std::vector<double> row(cells);
  std::vector<uint8_t> mask(cells);
  for (int e = 0; e < t; ++e) {
    for (int i = 0; i < series.nodes(); ++i) {
      for (int j = 0; j < series.nodes(); ++j) {
        const size_t c = size_t(i) * series.nodes() + j;
        mask[c] = series.present(e, i, j) ? 1 : 0;
        row[c] = mask[c] ? series.value(e, i, j) : 0.0;
      }
    }
    (e < n_train ? train : test).push_epoch(row, mask);
  }
  return {std::move(train), std::move(test)};
}

Window window_at(const DmSeries& series, int s, int w) {
  if (w < 1) throw Error("window_at: length must be >= 1");
  if (s < 0 || s >= series.epochs())
    throw Error("window_at: end epoch " + std::to_string(s) + " out of range");
  if (s - w + 1 < 0)
    throw Error("window_at: window of length " + std::to_string(w) +
                " ending at " + std::to_string(s) + " underflows the series");
  return Window{&series, s, w};
}

}  // namespace tubo

#include "tubo/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace tubo {

void BurstSeries::push_epoch(const std::vector<uint8_t>& row) {
  if (row.size() != size_t(nodes_) * nodes_)
    throw Error("BurstSeries::push_epoch: row size mismatch");
  ind_.insert(ind_.end(), row.begin(), row.end());
  ++epochs_;
}

size_t BurstSeries::count() const {
  size_t c = 0;
  for (uint8_t v : ind_) c += v;
  return c;
}

NonBurstSeries NonBurstSeries::with_missing_zeroed() const {
  NonBurstSeries out = *this;
  for (int t = 0; t < epochs_; ++t)
    for (int i = 0; i < nodes_; ++i)
      for (int j = 0; j < nodes_; ++j)
        if (out.state(t, i, j) == CellState::Missing)
          out.set(t, i, j, 0.0, CellState::Present);
  return out;
}

namespace {

struct SliceStats {
  double mu = 0.0;
  double sigma = 0.0;  // population
  int count = 0;
};

SliceStats slice_stats(const Window& w, int i, int j) {
  SliceStats s;
  double sum = 0.0;
  for (int k = 0; k < w.length; ++k) {
    if (!w.present(k, i, j)) continue;
    sum += w.value(k, i, j);
    ++s.count;
  }
  if (s.count == 0) return s;
  s.mu = sum / s.count;
  double ss = 0.0;
  for (int k = 0; k < w.length; ++k) {
    if (!w.present(k, i, j)) continue;
    const double d = w.value(k, i, j) - s.mu;
    ss += d * d;
  }
  s.sigma = std::sqrt(ss / s.count);
  return s;
}

}  // namespace

BurstDecision detect_bursts(const Window& window, int i, int j, double threshold) {
  if (window.length < kMinBurstWindow)
    throw Error("detect_bursts: window length " + std::to_string(window.length) +
                " is below the minimum " + std::to_string(kMinBurstWindow));
  BurstDecision d;
  if (!window.present(window.length - 1, i, j)) {
    d.insufficient_history = true;
    return d;
  }
  const SliceStats s = slice_stats(window, i, j);
  if (s.count < 2) {
    d.insufficient_history = true;
    return d;
  }
  const double x = window.value(window.length - 1, i, j);
  d.burst = (x - s.mu) > threshold * s.sigma;
  return d;
}

std::pair<BurstSeries, NonBurstSeries> split_burst(const DmSeries& train, int w,
                                                   double threshold) {
  const int t_total = train.epochs();
  const int n = train.nodes();
  if (w < kMinBurstWindow)
    throw Error("split_burst: w must be >= " + std::to_string(kMinBurstWindow));
  if (t_total < w)
    throw Error("split_burst: series has " + std::to_string(t_total) +
                " epochs, need at least w=" + std::to_string(w));

  BurstSeries bursts(t_total, n);
  NonBurstSeries rest(t_total, n, train.granularity_minutes());

  for (int t = 0; t < t_total; ++t) {
    const bool classifiable = t >= w - 1;
    Window win;
    if (classifiable) win = window_at(train, t, w);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (!train.present(t, i, j)) {
          rest.set(t, i, j, 0.0, CellState::Missing);
          continue;
        }
        bool is_burst = false;
        if (classifiable) is_burst = detect_bursts(win, i, j, threshold).burst;
        if (is_burst) {
          bursts.set(t, i, j, true);
          rest.set(t, i, j, 0.0, CellState::Burst);
        } else {
          rest.set(t, i, j, train.value(t, i, j), CellState::Present);
        }
      }
    }
  }
  return {std::move(bursts), std::move(rest)};
}

DmSeries zero_impute(const NonBurstSeries& series, ImputeMode mode) {
  (void)mode;  // MissingOnly is the only mode
  DmSeries out(series.nodes(), series.granularity_minutes());
  const size_t cells = size_t(series.nodes()) * series.nodes();
  std::vector<double> row(cells);
  std::vector<uint8_t> mask(cells);
  for (int t = 0; t < series.epochs(); ++t) {
    for (int i = 0; i < series.nodes(); ++i) {
      for (int j = 0; j < series.nodes(); ++j) {
        const size_t c = size_t(i) * series.nodes() + j;
        switch (series.state(t, i, j)) {
          case CellState::Present:
            row[c] = series.value(t, i, j);
            mask[c] = 1;
            break;
          case CellState::Missing:
            row[c] = 0.0;
            mask[c] = 1;
            break;
          case CellState::Burst:
            row[c] = 0.0;
            mask[c] = 0;
            break;
        }
      }
    }
    out.push_epoch(row, mask);
  }
  return out;
}

std::string to_string(NormScheme scheme) {
  switch (scheme) {
    case NormScheme::Glob: return "glob";
    case NormScheme::Indv: return "indv";
    case NormScheme::Roll: return "roll";
  }
  return "?";
}

NormScheme norm_scheme_from_string(const std::string& s) {
  if (s == "glob" || s == "GLOB") return NormScheme::Glob;
  if (s == "indv" || s == "INDV") return NormScheme::Indv;
  if (s == "roll" || s == "ROLL") return NormScheme::Roll;
  throw Error("unknown normalization scheme: " + s);
}

NormalizationParams fit_normalizer(const NonBurstSeries& train, NormScheme scheme) {
  NormalizationParams p;
  p.scheme = scheme;
  p.nodes = train.nodes();
  const int n = train.nodes();

  if (scheme == NormScheme::Roll) return p;  // only the floor is stored

  if (scheme == NormScheme::Glob) {
    double sum = 0.0;
    long long count = 0;
    for (int t = 0; t < train.epochs(); ++t)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (train.usable(t, i, j)) {
            sum += train.value(t, i, j);
            ++count;
          }
    if (count == 0) throw Error("fit_normalizer: no unmasked training values");
    p.glob_mu = sum / count;
    double ss = 0.0;
    for (int t = 0; t < train.epochs(); ++t)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (train.usable(t, i, j)) {
            const double d = train.value(t, i, j) - p.glob_mu;
            ss += d * d;
          }
    p.glob_sigma = std::max(std::sqrt(ss / count), p.sigma_floor);
    return p;
  }

  // INDV
  p.indv_mu.assign(size_t(n) * n, 0.0);
  p.indv_sigma.assign(size_t(n) * n, p.sigma_floor);
  bool any_data = false;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      long long count = 0;
      for (int t = 0; t < train.epochs(); ++t)
        if (train.usable(t, i, j)) {
          sum += train.value(t, i, j);
          ++count;
        }
      const size_t c = size_t(i) * n + j;
      if (count == 0) {
        if (i != j) p.empty_pair_warning = true;
        continue;
      }
      any_data = true;
      const double mu = sum / count;
      double ss = 0.0;
      for (int t = 0; t < train.epochs(); ++t)
        if (train.usable(t, i, j)) {
          const double d = train.value(t, i, j) - mu;
          ss += d * d;
        }
      p.indv_mu[c] = mu;
      p.indv_sigma[c] = std::max(std::sqrt(ss / count), p.sigma_floor);
    }
  }
  if (!any_data) throw Error("fit_normalizer: no unmasked training values");
  return p;
}

namespace {

template <typename PresentFn, typename ValueFn>
NormalizedWindow normalize_impl(int length, int nodes, const NormalizationParams& params,
                                PresentFn present, ValueFn value) {
  if (params.scheme == NormScheme::Roll && length < 2)
    throw Error("normalize: ROLL requires a window of length >= 2");
  if (params.scheme != NormScheme::Roll && params.nodes != nodes)
    throw Error("normalize: params fitted for a different node count");

  NormalizedWindow out;
  out.length = length;
  out.nodes = nodes;
  out.values.assign(size_t(length) * nodes * nodes, DmSeries::sentinel());
  out.present.assign(size_t(length) * nodes * nodes, 0);
  out.mu.assign(size_t(nodes) * nodes, 0.0);
  out.sigma.assign(size_t(nodes) * nodes, 1.0);

  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      const size_t c = size_t(i) * nodes + j;
      double mu = 0.0, sigma = 1.0;
      switch (params.scheme) {
        case NormScheme::Glob:
          mu = params.glob_mu;
          sigma = params.glob_sigma;
          break;
        case NormScheme::Indv:
          mu = params.indv_mu[c];
          sigma = params.indv_sigma[c];
          break;
        case NormScheme::Roll: {
          double sum = 0.0;
          int count = 0;
          for (int k = 0; k < length; ++k)
            if (present(k, i, j)) {
              sum += value(k, i, j);
              ++count;
            }
          if (count > 0) {
            mu = sum / count;
            double ss = 0.0;
            for (int k = 0; k < length; ++k)
              if (present(k, i, j)) {
                const double d = value(k, i, j) - mu;
                ss += d * d;
              }
            sigma = std::sqrt(ss / count);
          }
          break;
        }
      }
      sigma = std::max(sigma, params.sigma_floor);
      out.mu[c] = mu;
      out.sigma[c] = sigma;
      for (int k = 0; k < length; ++k) {
        if (!present(k, i, j)) continue;  // masked cells pass through untouched
        out.values[out.idx(k, i, j)] = (value(k, i, j) - mu) / sigma;
        out.present[out.idx(k, i, j)] = 1;
      }
    }
  }
  return out;
}

}  // namespace

InputWindow make_input(const Window& window) {
  InputWindow iw;
  iw.length = window.length;
  iw.nodes = window.series->nodes();
  iw.values.assign(size_t(iw.length) * iw.nodes * iw.nodes, DmSeries::sentinel());
  iw.present.assign(iw.values.size(), 0);
  for (int k = 0; k < iw.length; ++k)
    for (int i = 0; i < iw.nodes; ++i)
      for (int j = 0; j < iw.nodes; ++j)
        if (window.present(k, i, j)) {
          iw.values[iw.idx(k, i, j)] = window.value(k, i, j);
          iw.present[iw.idx(k, i, j)] = 1;
        }
  return iw;
}

NormalizedWindow normalize(const Window& window, const NormalizationParams& params) {
  return normalize_impl(
      window.length, window.series->nodes(), params,
      [&](int k, int i, int j) { return window.present(k, i, j); },
      [&](int k, int i, int j) { return window.value(k, i, j); });
}

NormalizedWindow normalize(const InputWindow& window, const NormalizationParams& params) {
  return normalize_impl(
      window.length, window.nodes, params,
      [&](int k, int i, int j) { return window.present[window.idx(k, i, j)] != 0; },
      [&](int k, int i, int j) { return window.values[window.idx(k, i, j)]; });
}

NormalizedWindow normalize_slice(const NonBurstSeries& series, int end, int length,
                                 const NormalizationParams& params) {
  if (end >= series.epochs() || end - length + 1 < 0)
    throw Error("normalize_slice: slice out of range");
  const int start = end - length + 1;
  return normalize_impl(
      length, series.nodes(), params,
      [&](int k, int i, int j) { return series.usable(start + k, i, j); },
      [&](int k, int i, int j) { return series.value(start + k, i, j); });
}

BurstStatsReport burst_stats(const DmSeries& series, int w, double threshold) {
  BurstStatsReport r;
  r.epoch_count = series.epochs();

  auto [bursts, rest] = split_burst(series, w, threshold);
  (void)rest;
  const int n = series.nodes();
  for (int t = w - 1; t < series.epochs(); ++t)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j || !series.present(t, i, j)) continue;
        ++r.classified_positions;
        if (bursts.burst(t, i, j)) ++r.burst_positions;
      }
  r.burst_fraction = r.classified_positions > 0
                         ? double(r.burst_positions) / double(r.classified_positions)
                         : 0.0;

  std::vector<double> demands;
  for (int t = 0; t < series.epochs(); ++t)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && series.present(t, i, j)) demands.push_back(series.value(t, i, j));
  if (!demands.empty()) {
    std::sort(demands.begin(), demands.end());
    const size_t m = demands.size();
    r.median_mbps = m % 2 == 1 ? demands[m / 2]
                               : 0.5 * (demands[m / 2 - 1] + demands[m / 2]);
    r.max_mbps = demands.back();
  }
  return r;
}

std::string BurstStatsReport::to_json_string() const {
  nlohmann::json j;
  j["epoch_count"] = epoch_count;
  j["classified_positions"] = classified_positions;
  j["burst_positions"] = burst_positions;
  j["burst_fraction"] = burst_fraction;
  j["median_mbps"] = median_mbps;
  j["max_mbps"] = max_mbps;
  return j.dump(2);
}

DmSeries burst_series_to_dm(const BurstSeries& b, int granularity_minutes) {
  DmSeries out(b.nodes(), granularity_minutes);
  const size_t cells = size_t(b.nodes()) * b.nodes();
  std::vector<double> row(cells);
  std::vector<uint8_t> mask(cells, 1);
  for (int t = 0; t < b.epochs(); ++t) {
    for (int i = 0; i < b.nodes(); ++i)
      for (int j = 0; j < b.nodes(); ++j)
        row[size_t(i) * b.nodes() + j] = b.burst(t, i, j) ? 1.0 : 0.0;
    out.push_epoch(row, mask);
  }
  return out;
}

BurstSeries burst_series_from_dm(const DmSeries& s) {
  BurstSeries b(s.epochs(), s.nodes());
  for (int t = 0; t < s.epochs(); ++t)
    for (int i = 0; i < s.nodes(); ++i)
      for (int j = 0; j < s.nodes(); ++j)
        b.set(t, i, j, s.present(t, i, j) && s.value(t, i, j) >= 0.5);
  return b;
}

}  // namespace tubo

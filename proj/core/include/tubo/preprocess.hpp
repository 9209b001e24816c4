#ifndef TUBO_PREPROCESS_HPP
#define TUBO_PREPROCESS_HPP

#include <string>
#include <vector>

#include "tubo/types.hpp"

namespace tubo {

/// Default outlier threshold: 99th percentile of a normal distribution,
/// expressed in standard deviations.
inline constexpr double kBurstThreshold = 2.576;

/// Floor applied to every standard deviation before division.
inline constexpr double kSigmaFloor = 1e-8;

/// Windows shorter than this can never produce a burst: the largest
/// attainable z-score in a window of length w is sqrt(w-1) < 2.576 for w <= 7.
inline constexpr int kMinBurstWindow = 8;

/// T x N x N binary burst indicators. Masked-out input positions are 0.
class BurstSeries {
 public:
  BurstSeries() = default;
  BurstSeries(int epochs, int nodes)
      : epochs_(epochs), nodes_(nodes), ind_(size_t(epochs) * nodes * nodes, 0) {}

  int epochs() const { return epochs_; }
  int nodes() const { return nodes_; }
  bool burst(int t, int i, int j) const { return ind_[idx(t, i, j)] != 0; }
  void set(int t, int i, int j, bool b) { ind_[idx(t, i, j)] = b ? 1 : 0; }
  void push_epoch(const std::vector<uint8_t>& row);

  size_t count() const;

 private:
  size_t idx(int t, int i, int j) const {
    return (size_t(t) * nodes_ + i) * nodes_ + j;
  }
  int epochs_ = 0;
  int nodes_ = 0;
  std::vector<uint8_t> ind_;
};

enum class CellState : uint8_t { Present, Missing, Burst };

/// Value series with bursts clipped out. Every cell is exactly one of:
/// present (a usable value), originally missing, or burst-clipped. Loss
/// computations must skip everything that is not Present.
class NonBurstSeries {
 public:
  NonBurstSeries() = default;
  NonBurstSeries(int epochs, int nodes, int granularity_minutes)
      : epochs_(epochs),
        nodes_(nodes),
        granularity_min_(granularity_minutes),
        values_(size_t(epochs) * nodes * nodes, DmSeries::sentinel()),
        state_(size_t(epochs) * nodes * nodes, CellState::Missing) {}

  int epochs() const { return epochs_; }
  int nodes() const { return nodes_; }
  int granularity_minutes() const { return granularity_min_; }

  CellState state(int t, int i, int j) const { return state_[idx(t, i, j)]; }
  bool usable(int t, int i, int j) const {
    return state_[idx(t, i, j)] == CellState::Present;
  }
  double value(int t, int i, int j) const { return values_[idx(t, i, j)]; }

  void set(int t, int i, int j, double v, CellState st) {
    values_[idx(t, i, j)] = st == CellState::Present ? v : DmSeries::sentinel();
    state_[idx(t, i, j)] = st;
  }

  /// Copy with originally-missing cells replaced by present zeros. Burst
  /// cells stay clipped. This is the training-side view after imputation.
  NonBurstSeries with_missing_zeroed() const;

 private:
  size_t idx(int t, int i, int j) const {
    return (size_t(t) * nodes_ + i) * nodes_ + j;
  }
  int epochs_ = 0;
  int nodes_ = 0;
  int granularity_min_ = 5;
  std::vector<double> values_;
  std::vector<CellState> state_;
};

struct BurstDecision {
  bool burst = false;
  bool insufficient_history = false;
};

/// Classifies the window's last value for OD pair (i, j): burst iff
/// d - mu > threshold * sigma, with mu and population sigma computed over the
/// window's unmasked (i, j) slice. Fewer than 2 unmasked values, or a masked
/// query value, yield indicator 0 with the insufficient_history flag.
BurstDecision detect_bursts(const Window& window, int i, int j,
                            double threshold = kBurstThreshold);

/// Algorithm-side dataset split: every epoch t >= w-1 is classified against
/// the trailing window ending at t. Burst positions get indicator 1 and are
/// clipped to N/A in the non-burst series; the first w-1 epochs are never
/// classified burst.
std::pair<BurstSeries, NonBurstSeries> split_burst(const DmSeries& train, int w,
                                                   double threshold = kBurstThreshold);

enum class ImputeMode { MissingOnly };

/// Originally-missing cells become present zeros; burst-clipped cells remain
/// masked (they are excluded from loss, not zeroed).
DmSeries zero_impute(const NonBurstSeries& series, ImputeMode mode = ImputeMode::MissingOnly);

enum class NormScheme { Glob, Indv, Roll };

std::string to_string(NormScheme scheme);
NormScheme norm_scheme_from_string(const std::string& s);

/// Fitted z-score parameters. GLOB stores one (mu, sigma) over the whole
/// training set, INDV one pair per OD, ROLL nothing (window statistics are
/// computed at apply time). Sigmas are floored at sigma_floor.
struct NormalizationParams {
  NormScheme scheme = NormScheme::Glob;
  double sigma_floor = kSigmaFloor;
  int nodes = 0;
  double glob_mu = 0.0;
  double glob_sigma = 1.0;
  std::vector<double> indv_mu;     // nodes*nodes, INDV only
  std::vector<double> indv_sigma;  // nodes*nodes, INDV only
  bool empty_pair_warning = false;
};

NormalizationParams fit_normalizer(const NonBurstSeries& train, NormScheme scheme);

/// A normalized window plus the exact (mu, sigma) used per OD pair, so
/// denormalization is exact. Masked positions keep the NaN sentinel and a
/// false presence flag; they are never read when computing statistics.
struct NormalizedWindow {
  int length = 0;
  int nodes = 0;
  std::vector<double> values;    // length*nodes*nodes, normalized
  std::vector<uint8_t> present;  // same layout
  std::vector<double> mu;        // nodes*nodes, inverse token
  std::vector<double> sigma;     // nodes*nodes, inverse token

  size_t idx(int k, int i, int j) const {
    return (size_t(k) * nodes + i) * nodes + j;
  }
  double denormalize(double z, int i, int j) const {
    return z * sigma[size_t(i) * nodes + j] + mu[size_t(i) * nodes + j];
  }
  /// Scale factor that maps a normalized spread back to Mbps.
  double scale(int i, int j) const { return sigma[size_t(i) * nodes + j]; }
};

/// Raw-value window decoupled from DmSeries, so the online pipeline can feed
/// burst-clipped histories to the models. present=0 cells are masked.
struct InputWindow {
  int length = 0;
  int nodes = 0;
  std::vector<double> values;
  std::vector<uint8_t> present;

  size_t idx(int k, int i, int j) const {
    return (size_t(k) * nodes + i) * nodes + j;
  }
};

InputWindow make_input(const Window& window);

/// z = (x - mu) / max(sigma, floor) under the scheme's scoping. ROLL computes
/// per-OD statistics over this window's unmasked values and requires
/// length >= 2.
NormalizedWindow normalize(const Window& window, const NormalizationParams& params);
NormalizedWindow normalize(const InputWindow& window, const NormalizationParams& params);

/// Same, reading from a NonBurstSeries slice [end-length+1, end].
NormalizedWindow normalize_slice(const NonBurstSeries& series, int end, int length,
                                 const NormalizationParams& params);

struct BurstStatsReport {
  int epoch_count = 0;
  long long classified_positions = 0;
  long long burst_positions = 0;
  double burst_fraction = 0.0;
  double median_mbps = 0.0;
  double max_mbps = 0.0;

  std::string to_json_string() const;
};

/// Table-style burst summary: fraction over classified positions, median and
/// max over unmasked demands.
BurstStatsReport burst_stats(const DmSeries& series, int w,
                             double threshold = kBurstThreshold);

/// BurstSeries round trip through the dm-csv container with {0,1} cells.
DmSeries burst_series_to_dm(const BurstSeries& b, int granularity_minutes);
BurstSeries burst_series_from_dm(const DmSeries& s);

}  // namespace tubo

#endif  // TUBO_PREPROCESS_HPP

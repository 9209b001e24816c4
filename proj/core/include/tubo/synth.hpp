#ifndef TUBO_SYNTH_HPP
#define TUBO_SYNTH_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tubo/preprocess.hpp"
#include "tubo/types.hpp"

namespace tubo {

struct BurstPlanEntry {
  int epoch = 0;
  int src = 0;
  int dst = 0;
  double multiplier = 10.0;
};

/// Bursts planted every `period` epochs starting at `start_epoch`, on the
/// listed OD pairs.
struct PeriodicBurstPlan {
  int start_epoch = 0;
  int period = 0;
  std::vector<std::pair<int, int>> pairs;
  double multiplier = 10.0;
};

/// Modulated-gravity synthetic demand: exponential node weights form a
/// normalized gravity base matrix (shape-scaled to the spatial variance
/// target), multiplied by a sinusoid-plus-noise total-traffic signal whose
/// amplitude is solved from the temporal variance target.
struct SynthSpec {
  int node_count = 8;
  int epochs = 2000;
  int granularity_minutes = 5;
  double mean_total_mbps = 1000.0;
  double spatial_variance = 25.0;   // variance of the time-mean demand entries
  double temporal_variance = 1e4;   // variance of total traffic over epochs
  int period = 100;                 // diurnal period P in epochs
  double noise_scale = 0.0;         // gaussian std added to total traffic
  double missing_fraction = 0.0;    // cells masked out uniformly at random
  std::vector<BurstPlanEntry> bursts;
  std::optional<PeriodicBurstPlan> periodic_bursts;
  int detect_window = 12;           // w used for the detectability check
  uint64_t seed = 1;
};

struct SynthResult {
  DmSeries series;
  BurstSeries ground_truth;
};

/// Deterministic in the spec (bit-identical for identical specs). Throws when
/// a calibration target is unsatisfiable, naming the constraint, and when a
/// planted burst would not be detectable at the spec's detect_window.
SynthResult generate(const SynthSpec& spec);

struct MixedRegimeResult {
  DmSeries series;
  BurstSeries ground_truth;
  std::vector<int> boundaries;  // cumulative segment lengths
};

/// Temporal concatenation of per-spec segments; all specs must share the
/// node count.
MixedRegimeResult mixed_regime(const std::vector<SynthSpec>& specs);

/// Spec file round trip (JSON) for the CLI.
SynthSpec load_synth_spec(const std::string& path);
void save_synth_spec(const SynthSpec& spec, const std::string& path);

/// Ground-truth sidecar (burst positions, regime boundaries) as JSON.
void save_ground_truth(const BurstSeries& truth, const std::vector<int>& boundaries,
                       const std::string& path);

}  // namespace tubo

#endif  // TUBO_SYNTH_HPP

#ifndef TUBO_PIPELINE_HPP
#define TUBO_PIPELINE_HPP

#include <map>
#include <string>
#include <vector>

#include "tubo/selection.hpp"

namespace tubo {

/// One online-loop step: effective demand for epoch t+1 per OD pair, either
/// the selected model's calibrated forecast or the measurement fallback
/// (latest observed value) where a burst was predicted.
struct ForecastOutcome {
  int epoch = 0;  // the forecast target epoch t+1
  std::string chosen_model;        // empty when every pair fell back
  std::vector<double> values;      // n*n effective demand in Mbps
  std::vector<uint8_t> fallback;   // n*n, 1 = measurement-fallback
  std::vector<uint8_t> burst_pred; // n*n, predicted b^{t+1}
  std::vector<double> scores;      // per-pool sigma_hat scores (selection epochs)
  std::vector<double> raw_scores;  // per-pool pre-calibration mean sigma
  std::vector<std::vector<double>> model_mu;  // per-pool mu_hat matrices
};

struct OnlineResult {
  int w = 0;
  int nodes = 0;
  double threshold = kBurstThreshold;
  std::vector<std::string> model_ids;  // pool registration order
  std::vector<ForecastOutcome> outcomes;
};

struct OnlineConfig {
  int w = 0;
  double threshold = kBurstThreshold;
  int mc_passes = 30;
  uint64_t seed = 1;
  bool clip_inputs = true;        // mask detected bursts out of model inputs
  int first_forecast_end = -1;    // t of the first iteration; default w-1
};

/// Algorithm-2 style loop over `series`: per epoch t, build the w-window,
/// refresh rolling burst indicators, classify b^{t+1} per OD, route burst
/// pairs to the measurement fallback and the rest to the selected model's
/// forecast, then append the epoch t+1 measurement. The forecast for t+1
/// never reads any epoch beyond t.
OnlineResult run_online(const DmSeries& series, const std::vector<ForecasterHandle>& pool,
                        const BurstClassifierHandle& m_b, const CalibrationMap& map,
                        const OnlineConfig& cfg);

struct MetricsReport {
  double masked_mae = 0.0;  // Mbps, forecast-source positions with truth present
  long long mae_positions = 0;
  double burst_accuracy = 0.0;
  long long burst_classified = 0;
  bool identification_defined = false;
  double burst_identification = 0.0;  // recall on the burst class
  long long actual_bursts = 0;
  std::map<std::string, double> selection_ratios;
  long long selection_epochs = 0;

  std::string to_json_string() const;
};

/// Scores outcomes against the truth series. Error positions masked-missing
/// in the test set are excluded; actual burst indicators are recomputed from
/// the truth with the same trailing-window detector the pipeline uses.
MetricsReport evaluate(const OnlineResult& result, const DmSeries& truth);

struct PerOdMaeCdf {
  std::vector<double> sorted_mae;  // ascending, one entry per evaluable OD pair
  int excluded_pairs = 0;          // pairs with zero evaluable positions
};

PerOdMaeCdf per_od_mae_cdf(const OnlineResult& result, const DmSeries& truth);

/// JSON-lines: a header line with (w, nodes, threshold, model ids), then one
/// outcome per line.
void write_outcomes_jsonl(const OnlineResult& result, const std::string& path);
OnlineResult read_outcomes_jsonl(const std::string& path);

/// Selection records as JSON-lines (epoch, per-model scores, chosen id).
void write_selection_jsonl(const OnlineResult& result, const std::string& path);

/// Two-column CSV (rank_fraction, mae) for external plotting.
void write_cdf_csv(const PerOdMaeCdf& cdf, const std::string& path);

}  // namespace tubo

#endif  // TUBO_PIPELINE_HPP

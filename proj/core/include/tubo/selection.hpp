#ifndef TUBO_SELECTION_HPP
#define TUBO_SELECTION_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tubo/models.hpp"

namespace tubo {

/// Affine uncertainty calibration for one model: sigma_hat = a*sigma + b,
/// mu_hat = max(mu + c, 0). Fitted on validation data only.
struct ModelCalibration {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  bool degenerate = false;  // model emitted (near-)constant zero sigma
  double nll = 0.0;
};

struct CalibrationMap {
  std::map<std::string, ModelCalibration> entries;
};

/// One validation observation for calibration fitting.
struct CalPoint {
  double mu = 0.0;
  double sigma = 0.0;
  double y_true = 0.0;
};

/// Per model, finds (a, b, c) minimizing the Gaussian negative log-likelihood
/// of residuals y - (mu + c) under scale a*sigma + b, by coarse grid plus
/// coordinate refinement. Requires >= 50 points per model. Models whose sigma
/// is identically ~0 get the degenerate fit a=0, b=residual std. The mean
/// correction c stays 0 unless it strictly improves the NLL.
CalibrationMap fit_calibration(
    const std::map<std::string, std::vector<CalPoint>>& validation_points);

/// Gaussian NLL of the points under a given (a, b, c); the objective the
/// fitter minimizes, exposed for verification.
double calibration_nll(const std::vector<CalPoint>& points, double a, double b,
                       double c);

struct CalibratedPrediction {
  std::string model_id;
  int nodes = 0;
  std::vector<double> mu_hat;     // n*n, elementwise >= 0
  std::vector<double> sigma_hat;  // n*n, off-diagonal elementwise > 0
};

CalibratedPrediction calibrate(const McPrediction& pred, const CalibrationMap& map,
                               const std::string& model_id);

/// Mean sigma_hat over off-diagonal elements: the scalar selection score.
double scalar_score(const std::vector<double>& sigma_hat, int nodes);

/// Index of the smallest score; ties go to the lowest index (fixed model
/// registration order).
size_t choose_best(const std::vector<double>& scores);

struct SelectionRecord {
  int epoch = -1;
  std::string chosen_model;
  std::vector<double> scores;  // aligned with the pool order
};

/// Runs mc_predict + calibrate for every pool member on the window, reduces
/// sigma_hat to the scalar score, and returns the argmin member's calibrated
/// prediction. Deterministic given `seed`.
std::pair<SelectionRecord, CalibratedPrediction> select_model(
    const std::vector<ForecasterHandle>& pool, const CalibrationMap& map,
    const InputWindow& window, int passes, uint64_t seed = 0);

/// Full per-member view of one selection step, for diagnostics such as the
/// MAE/uncertainty correlation report.
struct SelectionDetail {
  SelectionRecord record;
  std::vector<CalibratedPrediction> per_model;
  std::vector<double> raw_sigma_means;  // pre-calibration, aligned with pool
};

SelectionDetail select_model_detailed(const std::vector<ForecasterHandle>& pool,
                                      const CalibrationMap& map,
                                      const InputWindow& window, int passes,
                                      uint64_t seed = 0);

/// Unweighted elementwise mean of the members' deterministic forecasts.
DemandMatrix ensemble_predict(const std::vector<ForecasterHandle>& pool,
                              const InputWindow& window);
DemandMatrix ensemble_predict(const std::vector<ForecasterHandle>& pool,
                              const Window& window);

/// Pearson correlation; nullopt when either series has zero variance.
std::optional<double> pearson(const std::vector<double>& xs,
                              const std::vector<double>& ys);

/// Per-window diagnostics feeding the correlation report.
struct WindowStat {
  double mae = 0.0;
  double mean_sigma = 0.0;
  double mean_sigma_cal = 0.0;
};

struct CorrelationEntry {
  std::string model_id;
  int windows = 0;
  std::optional<double> r_raw;  // corr(MAE, sigma), pre-calibration
  std::optional<double> r_cal;  // corr(MAE, sigma_hat), post-calibration
};

/// Pearson r between per-window MAE and mean uncertainty, before and after
/// calibration. Requires >= 30 windows.
CorrelationEntry correlation_report(const std::string& model_id,
                                    const std::vector<WindowStat>& stats);

void save_calibration(const CalibrationMap& map, const std::string& path);
CalibrationMap load_calibration(const std::string& path);

}  // namespace tubo

#endif  // TUBO_SELECTION_HPP

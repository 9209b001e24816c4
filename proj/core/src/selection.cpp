#include "tubo/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tubo/rng.hpp"

namespace tubo {

double calibration_nll(const std::vector<CalPoint>& points, double a, double b,
                       double c) {
  double nll = 0.0;
  for (const CalPoint& p : points) {
    const double s = std::max(a * p.sigma + b, 1e-12);
    const double r = p.y_true - (p.mu + c);
    nll += std::log(s) + r * r / (2.0 * s * s);
  }
  return nll;
}

namespace {

// Coordinate descent on (a, b) for fixed c, seeded from a coarse grid.
ModelCalibration fit_one(const std::vector<CalPoint>& points) {
  double sigma_max = 0.0, resid_sq = 0.0, resid_sum = 0.0;
  for (const CalPoint& p : points) {
    sigma_max = std::max(sigma_max, p.sigma);
    const double r = p.y_true - p.mu;
    resid_sq += r * r;
    resid_sum += r;
  }
  const double rms = std::sqrt(resid_sq / points.size());
  const double mean_resid = resid_sum / points.size();

  ModelCalibration cal;
  if (sigma_max <= 1e-12) {
    // Constant-zero sigma (e.g. seasonal-naive): Gaussian MLE scale.
    cal.degenerate = true;
    cal.a = 0.0;
    cal.c = 0.0;
    double ss0 = 0.0, ss1 = 0.0;
    for (const CalPoint& p : points) {
      const double r0 = p.y_true - p.mu;
      const double r1 = r0 - mean_resid;
      ss0 += r0 * r0;
      ss1 += r1 * r1;
    }
    const double b0 = std::max(std::sqrt(ss0 / points.size()), 1e-12);
    const double b1 = std::max(std::sqrt(ss1 / points.size()), 1e-12);
    const double nll0 = calibration_nll(points, 0.0, b0, 0.0);
    const double nll1 = calibration_nll(points, 0.0, b1, mean_resid);
    double mae0 = 0.0, mae1 = 0.0;
    for (const CalPoint& p : points) {
      mae0 += std::abs(p.y_true - std::max(p.mu, 0.0));
      mae1 += std::abs(p.y_true - std::max(p.mu + mean_resid, 0.0));
    }
    if (nll1 < nll0 - 1e-9 && mae1 <= mae0) {
      cal.b = b1;
      cal.c = mean_resid;
      cal.nll = nll1;
    } else {
      cal.b = b0;
      cal.nll = nll0;
    }
    return cal;
  }

  auto fit_ab = [&](double c, double& a_out, double& b_out) {
    double best_a = 1.0, best_b = rms > 0 ? rms : 1e-6;
    double best = std::numeric_limits<double>::infinity();
    const double b_unit = std::max(rms, 1e-9);
    for (double a : {0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0}) {
      for (double bf : {0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0}) {
        const double b = bf * b_unit;
        if (a == 0.0 && b == 0.0) continue;
        const double v = calibration_nll(points, a, b, c);
        if (v < best) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    }
    // Alternating golden-section refinement on each coordinate.
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    auto golden = [&](auto eval, double lo, double hi) {
      double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
      double f1 = eval(x1), f2 = eval(x2);
      for (int it = 0; it < 48; ++it) {
        if (f1 < f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - gr * (hi - lo);
          f1 = eval(x1);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + gr * (hi - lo);
          f2 = eval(x2);
        }
      }
      return 0.5 * (lo + hi);
    };
    for (int round = 0; round < 4; ++round) {
      best_a = golden([&](double a) { return calibration_nll(points, a, best_b, c); },
                      0.0, std::max(8.0, 2.0 * best_a));
      best_b = golden([&](double b) { return calibration_nll(points, best_a, b, c); },
                      0.0, std::max(4.0 * b_unit, 2.0 * best_b));
    }
    if (best_a < 1e-12 && best_b < 1e-12) best_b = std::max(rms, 1e-12);
    a_out = best_a;
    b_out = best_b;
    return calibration_nll(points, best_a, best_b, c);
  };

  double a0, b0;
  const double nll0 = fit_ab(0.0, a0, b0);
  double a1, b1;
  const double nll1 = fit_ab(mean_resid, a1, b1);
  // The mean correction stays 0 unless it improves the NLL without hurting
  // the point forecast (mean absolute residual).
  double mae0 = 0.0, mae1 = 0.0;
  for (const CalPoint& p : points) {
    mae0 += std::abs(p.y_true - std::max(p.mu, 0.0));
    mae1 += std::abs(p.y_true - std::max(p.mu + mean_resid, 0.0));
  }
  if (nll1 < nll0 - 1e-9 && mae1 <= mae0) {
    cal.a = a1;
    cal.b = b1;
    cal.c = mean_resid;
    cal.nll = nll1;
  } else {
    cal.a = a0;
    cal.b = b0;
    cal.c = 0.0;
    cal.nll = nll0;
  }
  return cal;
}

}  // namespace

CalibrationMap fit_calibration(
    const std::map<std::string, std::vector<CalPoint>>& validation_points) {
  CalibrationMap map;
  for (const auto& [model_id, points] : validation_points) {
    if (points.size() < 50)
      throw Error("fit_calibration: model " + model_id + " has only " +
                  std::to_string(points.size()) + " validation points, need >= 50");
    for (const CalPoint& p : points)
      if (!std::isfinite(p.mu) || !std::isfinite(p.sigma) || !std::isfinite(p.y_true))
        throw Error("fit_calibration: non-finite validation point for " + model_id);
    map.entries[model_id] = fit_one(points);
  }
  return map;
}

CalibratedPrediction calibrate(const McPrediction& pred, const CalibrationMap& map,
                               const std::string& model_id) {
  const auto it = map.entries.find(model_id);
  if (it == map.entries.end())
    throw Error("calibrate: unknown model_id " + model_id);
  const ModelCalibration& cal = it->second;
  CalibratedPrediction out;
  out.model_id = model_id;
  out.nodes = pred.nodes;
  const int n = pred.nodes;
  out.mu_hat.assign(size_t(n) * n, 0.0);
  out.sigma_hat.assign(size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const size_t c = size_t(i) * n + j;
      out.mu_hat[c] = std::max(pred.mu[c] + cal.c, 0.0);
      out.sigma_hat[c] = std::max(cal.a * pred.sigma[c] + cal.b, 1e-8);
    }
  return out;
}

double scalar_score(const std::vector<double>& sigma_hat, int nodes) {
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < nodes; ++i)
    for (int j = 0; j < nodes; ++j) {
      if (i == j) continue;
      sum += sigma_hat[size_t(i) * nodes + j];
      ++count;
    }
  return count > 0 ? sum / count : 0.0;
}

size_t choose_best(const std::vector<double>& scores) {
  if (scores.empty()) throw Error("choose_best: empty score list");
  size_t best = 0;
  for (size_t k = 1; k < scores.size(); ++k)
    if (scores[k] < scores[best]) best = k;
  return best;
}

SelectionDetail select_model_detailed(const std::vector<ForecasterHandle>& pool,
                                      const CalibrationMap& map,
                                      const InputWindow& window, int passes,
                                      uint64_t seed) {
  if (pool.empty()) throw Error("select_model: empty pool");
  SelectionDetail detail;
  for (size_t m = 0; m < pool.size(); ++m) {
    const uint64_t mc_seed =
        seed != 0 ? derive_seed(seed, "select-mc", uint64_t(m)) : 0;
    const McPrediction mc = mc_predict(pool[m], window, passes, mc_seed);
    detail.raw_sigma_means.push_back(scalar_score(mc.sigma, mc.nodes));
    detail.per_model.push_back(calibrate(mc, map, pool[m].model_id));
    detail.record.scores.push_back(
        scalar_score(detail.per_model.back().sigma_hat, detail.per_model.back().nodes));
  }
  const size_t best = choose_best(detail.record.scores);
  detail.record.chosen_model = pool[best].model_id;
  return detail;
}

std::pair<SelectionRecord, CalibratedPrediction> select_model(
    const std::vector<ForecasterHandle>& pool, const CalibrationMap& map,
    const InputWindow& window, int passes, uint64_t seed) {
  SelectionDetail detail = select_model_detailed(pool, map, window, passes, seed);
  const size_t best = choose_best(detail.record.scores);
  return {std::move(detail.record), std::move(detail.per_model[best])};
}

DemandMatrix ensemble_predict(const std::vector<ForecasterHandle>& pool,
                              const InputWindow& window) {
  if (pool.empty()) throw Error("ensemble_predict: empty pool");
  DemandMatrix acc(pool.front().nodes, 0);
  for (const ForecasterHandle& f : pool) {
    const DemandMatrix dm = predict(f, window);
    for (size_t c = 0; c < acc.values.size(); ++c) acc.values[c] += dm.values[c];
  }
  for (double& v : acc.values) v /= double(pool.size());
  return acc;
}

DemandMatrix ensemble_predict(const std::vector<ForecasterHandle>& pool,
                              const Window& window) {
  return ensemble_predict(pool, make_input(window));
}

std::optional<double> pearson(const std::vector<double>& xs,
                              const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return std::nullopt;
  const size_t n = xs.size();
  double mx = 0.0, my = 0.0;
  for (size_t k = 0; k < n; ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t k = 0; k < n; ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

CorrelationEntry correlation_report(const std::string& model_id,
                                    const std::vector<WindowStat>& stats) {
  if (stats.size() < 30)
    throw Error("correlation_report: need >= 30 windows, got " +
                std::to_string(stats.size()));
  CorrelationEntry e;
  e.model_id = model_id;
  e.windows = int(stats.size());
  std::vector<double> mae, raw, cal;
  for (const WindowStat& s : stats) {
    mae.push_back(s.mae);
    raw.push_back(s.mean_sigma);
    cal.push_back(s.mean_sigma_cal);
  }
  e.r_raw = pearson(mae, raw);
  e.r_cal = pearson(mae, cal);
  return e;
}

void save_calibration(const CalibrationMap& map, const std::string& path) {
  nlohmann::json j;
  j["format"] = "tubo-calibration-v1";
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [id, cal] : map.entries)
    entries[id] = {{"a", cal.a},
                   {"b", cal.b},
                   {"c", cal.c},
                   {"degenerate", cal.degenerate},
                   {"nll", cal.nll}};
  j["entries"] = entries;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_calibration: cannot open " + path);
  out << j.dump(2) << "\n";
}

CalibrationMap load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_calibration: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("format").get<std::string>() != "tubo-calibration-v1")
    throw Error("load_calibration: unsupported format tag in " + path);
  CalibrationMap map;
  for (const auto& [id, cj] : j.at("entries").items()) {
    ModelCalibration cal;
    cal.a = cj.at("a").get<double>();
    cal.b = cj.at("b").get<double>();
    cal.c = cj.at("c").get<double>();
    cal.degenerate = cj.at("degenerate").get<bool>();
    cal.nll = cj.at("nll").get<double>();
    map.entries[id] = cal;
  }
  return map;
}

}  // namespace tubo

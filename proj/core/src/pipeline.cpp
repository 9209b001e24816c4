#include "tubo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tubo/rng.hpp"

namespace tubo {

OnlineResult run_online(const DmSeries& series, const std::vector<ForecasterHandle>& pool,
                        const BurstClassifierHandle& m_b, const CalibrationMap& map,
                        const OnlineConfig& cfg) {
  const int n = series.nodes();
  const int w = cfg.w;
  const int cells = n * n;
  if (pool.empty()) throw Error("run_online: empty pool");
  if (w < kMinBurstWindow) throw Error("run_online: w too small");
  for (const ForecasterHandle& f : pool)
    if (f.window != w)
      throw Error("run_online: pool member " + f.model_id +
                  " trained with a different window length");
  if (m_b.window != w) throw Error("run_online: burst classifier window mismatch");

  const int start = cfg.first_forecast_end >= 0 ? cfg.first_forecast_end : w - 1;
  if (start < w - 1)
    throw Error("run_online: first forecast needs at least w history epochs");
  if (start + 1 >= series.epochs())
    throw Error("run_online: nothing to forecast past epoch " + std::to_string(start));

  OnlineResult result;
  result.w = w;
  result.nodes = n;
  result.threshold = cfg.threshold;
  for (const ForecasterHandle& f : pool) result.model_ids.push_back(f.model_id);

  // Rolling state: measured history, per-position burst indicators computed
  // as epochs arrive, and the latest observed value per OD pair.
  DmSeries history(n, series.granularity_minutes());
  BurstSeries indicators(0, n);
  std::vector<double> last_measured(cells, 0.0);
  std::vector<uint8_t> ever_measured(cells, 0);
  std::vector<double> row(cells);
  std::vector<uint8_t> mask(cells), ind_row(cells);

  auto append_epoch = [&](int e) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const size_t c = size_t(i) * n + j;
        mask[c] = series.present(e, i, j) ? 1 : 0;
        row[c] = mask[c] ? series.value(e, i, j) : 0.0;
      }
    history.push_epoch(row, mask);
    const int t = history.epochs() - 1;
    std::fill(ind_row.begin(), ind_row.end(), 0);
    if (t >= w - 1) {
      const Window win = window_at(history, t, w);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j && history.present(t, i, j) &&
              detect_bursts(win, i, j, cfg.threshold).burst)
            ind_row[size_t(i) * n + j] = 1;
    }
    indicators.push_epoch(ind_row);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const size_t c = size_t(i) * n + j;
        if (i != j && history.present(t, i, j)) {
          last_measured[c] = history.value(t, i, j);
          ever_measured[c] = 1;
        }
      }
  };

  for (int e = 0; e <= start; ++e) append_epoch(e);

  for (int t = start; t + 1 < series.epochs(); ++t) {
    // history holds epochs [0, t]; nothing beyond t is readable here.
    const BinaryWindow bw = binary_window(indicators, t, w);
    const std::vector<uint8_t> burst_pred = classify_burst(m_b, bw);

    bool any_forecast = false;
    for (int i = 0; i < n && !any_forecast; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && !burst_pred[size_t(i) * n + j]) {
          any_forecast = true;
          break;
        }

    ForecastOutcome outcome;
    outcome.epoch = t + 1;
    outcome.values.assign(cells, 0.0);
    outcome.fallback.assign(cells, 0);
    outcome.burst_pred = burst_pred;

    CalibratedPrediction pred;
    if (any_forecast) {
      // Model input: the measured window with detected bursts clipped out
      // (unless the no-clip ablation is active).
      InputWindow iw;
      iw.length = w;
      iw.nodes = n;
      iw.values.assign(size_t(w) * cells, DmSeries::sentinel());
      iw.present.assign(size_t(w) * cells, 0);
      for (int k = 0; k < w; ++k) {
        const int e = t - w + 1 + k;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const size_t c = iw.idx(k, i, j);
            if (!history.present(e, i, j)) continue;
            if (cfg.clip_inputs && i != j && indicators.burst(e, i, j)) continue;
            iw.values[c] = history.value(e, i, j);
            iw.present[c] = 1;
          }
      }
      SelectionDetail detail = select_model_detailed(
          pool, map, iw, cfg.mc_passes, derive_seed(cfg.seed, "select", uint64_t(t)));
      outcome.chosen_model = detail.record.chosen_model;
      outcome.scores = detail.record.scores;
      outcome.raw_scores = detail.raw_sigma_means;
      for (const CalibratedPrediction& p : detail.per_model)
        outcome.model_mu.push_back(p.mu_hat);
      pred = detail.per_model[choose_best(detail.record.scores)];
    }

    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const size_t c = size_t(i) * n + j;
        if (burst_pred[c]) {
          outcome.fallback[c] = 1;
          outcome.values[c] = ever_measured[c] ? last_measured[c] : 0.0;
        } else {
          outcome.values[c] = pred.mu_hat[c];
        }
      }

    result.outcomes.push_back(std::move(outcome));
    append_epoch(t + 1);  // measure and add d^{t+1} before the next iteration
  }
  return result;
}

MetricsReport evaluate(const OnlineResult& result, const DmSeries& truth) {
  MetricsReport report;
  const int n = result.nodes;
  const int w = result.w;
  if (truth.nodes() != n) throw Error("evaluate: node count mismatch");

  double abs_sum = 0.0;
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  std::map<std::string, long long> chosen_counts;

  for (const ForecastOutcome& outcome : result.outcomes) {
    const int e = outcome.epoch;
    if (e < 0 || e >= truth.epochs())
      throw Error("evaluate: outcome epoch " + std::to_string(e) +
                  " is not aligned with the truth series");
    const bool classifiable = e >= w - 1;
    Window win;
    if (classifiable) win = window_at(truth, e, w);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const size_t c = size_t(i) * n + j;
        const bool have_truth = truth.present(e, i, j);
        if (have_truth && !outcome.fallback[c]) {
          abs_sum += std::abs(outcome.values[c] - truth.value(e, i, j));
          ++report.mae_positions;
        }
        if (have_truth && classifiable) {
          const bool actual = detect_bursts(win, i, j, result.threshold).burst;
          const bool predicted = outcome.burst_pred[c] != 0;
          ++report.burst_classified;
          if (actual && predicted) ++tp;
          else if (actual && !predicted) ++fn;
          else if (!actual && predicted) ++fp;
          else ++tn;
        }
      }
    if (!outcome.chosen_model.empty()) {
      ++report.selection_epochs;
      ++chosen_counts[outcome.chosen_model];
    }
  }

  report.masked_mae = report.mae_positions > 0 ? abs_sum / double(report.mae_positions) : 0.0;
  report.actual_bursts = tp + fn;
  report.burst_accuracy = report.burst_classified > 0
                              ? double(tp + tn) / double(report.burst_classified)
                              : 1.0;
  if (report.actual_bursts > 0) {
    report.identification_defined = true;
    report.burst_identification = double(tp) / double(report.actual_bursts);
  }
  for (const std::string& id : result.model_ids)
    report.selection_ratios[id] =
        report.selection_epochs > 0
            ? double(chosen_counts[id]) / double(report.selection_epochs)
            : 0.0;
  return report;
}

PerOdMaeCdf per_od_mae_cdf(const OnlineResult& result, const DmSeries& truth) {
  const int n = result.nodes;
  if (truth.nodes() != n) throw Error("per_od_mae_cdf: node count mismatch");
  PerOdMaeCdf cdf;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const size_t c = size_t(i) * n + j;
      double abs_sum = 0.0;
      long long count = 0;
      for (const ForecastOutcome& outcome : result.outcomes) {
        const int e = outcome.epoch;
        if (e < 0 || e >= truth.epochs())
          throw Error("per_od_mae_cdf: outcome epoch out of range");
        if (!truth.present(e, i, j) || outcome.fallback[c]) continue;
        abs_sum += std::abs(outcome.values[c] - truth.value(e, i, j));
        ++count;
      }
      if (count == 0) {
        ++cdf.excluded_pairs;
      } else {
        cdf.sorted_mae.push_back(abs_sum / double(count));
      }
    }
  std::sort(cdf.sorted_mae.begin(), cdf.sorted_mae.end());
  return cdf;
}

std::string MetricsReport::to_json_string() const {
  nlohmann::json j;
  j["masked_mae_mbps"] = masked_mae;
  j["mae_positions"] = mae_positions;
  j["burst_accuracy"] = burst_accuracy;
  j["burst_classified"] = burst_classified;
  j["actual_bursts"] = actual_bursts;
  if (identification_defined)
    j["burst_identification_rate"] = burst_identification;
  else
    j["burst_identification_rate"] = nullptr;
  j["selection_epochs"] = selection_epochs;
  j["selection_ratios"] = selection_ratios;
  return j.dump(2);
}

void write_outcomes_jsonl(const OnlineResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_outcomes_jsonl: cannot open " + path);
  nlohmann::json header;
  header["format"] = "tubo-outcomes-v1";
  header["w"] = result.w;
  header["nodes"] = result.nodes;
  header["threshold"] = result.threshold;
  header["model_ids"] = result.model_ids;
  out << header.dump() << "\n";
  for (const ForecastOutcome& o : result.outcomes) {
    nlohmann::json j;
    j["epoch"] = o.epoch;
    j["chosen_model"] = o.chosen_model;
    j["values"] = o.values;
    j["fallback"] = o.fallback;
    j["burst_pred"] = o.burst_pred;
    j["scores"] = o.scores;
    j["raw_scores"] = o.raw_scores;
    out << j.dump() << "\n";
  }
}

OnlineResult read_outcomes_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_outcomes_jsonl: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("read_outcomes_jsonl: empty file " + path);
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format").get<std::string>() != "tubo-outcomes-v1")
    throw Error("read_outcomes_jsonl: unsupported format tag in " + path);
  OnlineResult r;
  r.w = header.at("w").get<int>();
  r.nodes = header.at("nodes").get<int>();
  r.threshold = header.at("threshold").get<double>();
  r.model_ids = header.at("model_ids").get<std::vector<std::string>>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    ForecastOutcome o;
    o.epoch = j.at("epoch").get<int>();
    o.chosen_model = j.at("chosen_model").get<std::string>();
    o.values = j.at("values").get<std::vector<double>>();
    o.fallback = j.at("fallback").get<std::vector<uint8_t>>();
    o.burst_pred = j.at("burst_pred").get<std::vector<uint8_t>>();
    o.scores = j.at("scores").get<std::vector<double>>();
    o.raw_scores = j.at("raw_scores").get<std::vector<double>>();
    r.outcomes.push_back(std::move(o));
  }
  return r;
}

void write_selection_jsonl(const OnlineResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_selection_jsonl: cannot open " + path);
  for (const ForecastOutcome& o : result.outcomes) {
    if (o.chosen_model.empty()) continue;
    nlohmann::json j;
    j["epoch"] = o.epoch;
    j["chosen_model"] = o.chosen_model;
    nlohmann::json scores = nlohmann::json::object();
    for (size_t m = 0; m < result.model_ids.size() && m < o.scores.size(); ++m)
      scores[result.model_ids[m]] = o.scores[m];
    j["scores"] = scores;
    out << j.dump() << "\n";
  }
}

void write_cdf_csv(const PerOdMaeCdf& cdf, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_cdf_csv: cannot open " + path);
  out << "rank_fraction,mae_mbps\n";
  const size_t n = cdf.sorted_mae.size();
  char buf[64];
  for (size_t k = 0; k < n; ++k) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", double(k + 1) / double(n),
                  cdf.sorted_mae[k]);
    out << buf;
  }
}

}  // namespace tubo

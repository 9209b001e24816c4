// tubo: demand-matrix forecasting workbench.
//
// Subcommands: gen, ingest, stats, train, evaluate, te-sim. Every command is
// deterministic given (config, seed); reports embed the config hash and tool
// version.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tubo/pipeline.hpp"
#include "tubo/rng.hpp"
#include "tubo/selection.hpp"
#include "tubo/series_io.hpp"
#include "tubo/synth.hpp"
#include "tubo/te.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct PoolEntry {
  tubo::ModelKind kind = tubo::ModelKind::Mlp;
  tubo::NormScheme norm = tubo::NormScheme::Glob;
  double dropout = 0.1;
  int period = 0;   // 0: fall back to train.seasonal_period
  int hidden = 0;   // 0: kind default
};

struct RunConfig {
  std::string data_path;
  std::string topology_path;
  std::string models_dir = "models";
  std::string reports_dir = "reports";
  int w = 128;
  double burst_threshold = tubo::kBurstThreshold;
  double train_fraction = 0.6;
  std::vector<PoolEntry> pool;
  int mc_passes = 30;
  bool calibration = true;
  std::string objective = "p1";
  int k_paths = 4;
  uint64_t seed = 1;
  bool clip = true;
  tubo::TrainConfig train;
};

std::vector<PoolEntry> default_pool() {
  return {{tubo::ModelKind::SeasonalNaive, tubo::NormScheme::Glob, 0.0, 0, 0},
          {tubo::ModelKind::LinearAr, tubo::NormScheme::Indv, 0.1, 0, 0},
          {tubo::ModelKind::Mlp, tubo::NormScheme::Glob, 0.1, 0, 0},
          {tubo::ModelKind::Recurrent, tubo::NormScheme::Roll, 0.1, 0, 0}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tubo::Error("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw tubo::Error("config " + path + ": " + e.what());
  }
  RunConfig c;
  c.data_path = j.value("data_path", std::string());
  c.topology_path = j.value("topology_path", std::string());
  c.models_dir = j.value("models_dir", c.models_dir);
  c.reports_dir = j.value("reports_dir", c.reports_dir);
  c.w = j.value("w", c.w);
  c.burst_threshold = j.value("burst_threshold", c.burst_threshold);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.mc_passes = j.value("mc_passes", c.mc_passes);
  c.calibration = j.value("calibration", c.calibration);
  c.objective = j.value("objective", c.objective);
  c.k_paths = j.value("k_paths", c.k_paths);
  c.seed = j.value("seed", c.seed);
  c.clip = j.value("clip", c.clip);
  if (j.contains("pool")) {
    for (const auto& pj : j.at("pool")) {
      PoolEntry e;
      e.kind = tubo::model_kind_from_string(pj.at("kind").get<std::string>());
      e.norm = tubo::norm_scheme_from_string(pj.value("norm", std::string("glob")));
      e.dropout = pj.value("dropout", e.kind == tubo::ModelKind::SeasonalNaive ? 0.0 : 0.1);
      e.period = pj.value("period", 0);
      e.hidden = pj.value("hidden", 0);
      c.pool.push_back(e);
    }
  } else {
    c.pool = default_pool();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    if (t.contains("betas")) {
      c.train.adam_beta1 = t.at("betas").at(0).get<double>();
      c.train.adam_beta2 = t.at("betas").at(1).get<double>();
    }
    c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.patience = t.value("patience", c.train.patience);
    c.train.validation_fraction =
        t.value("validation_fraction", c.train.validation_fraction);
    c.train.use_kfold = t.value("use_kfold", c.train.use_kfold);
    c.train.kfold_k = t.value("kfold_k", c.train.kfold_k);
    c.train.seasonal_period = t.value("seasonal_period", c.train.seasonal_period);
    c.train.mlp_hidden = t.value("mlp_hidden", c.train.mlp_hidden);
    c.train.rnn_hidden = t.value("rnn_hidden", c.train.rnn_hidden);
  }
  c.train.window = c.w;
  if (const char* env = std::getenv("TUBO_REPORT_DIR")) c.reports_dir = env;
  return c;
}

// Canonical JSON of everything that affects trained artifacts; the hash of
// this blob ties manifests to configs.
json training_config_json(const RunConfig& c) {
  json pool = json::array();
  for (const PoolEntry& e : c.pool)
    pool.push_back({{"kind", tubo::to_string(e.kind)},
                    {"norm", tubo::to_string(e.norm)},
                    {"dropout", e.dropout},
                    {"period", e.period},
                    {"hidden", e.hidden}});
  return json{{"data_path", c.data_path},
              {"w", c.w},
              {"burst_threshold", c.burst_threshold},
              {"train_fraction", c.train_fraction},
              {"pool", pool},
              {"mc_passes", c.mc_passes},
              {"calibration", c.calibration},
              {"seed", c.seed},
              {"train",
               {{"learning_rate", c.train.learning_rate},
                {"betas", {c.train.adam_beta1, c.train.adam_beta2}},
                {"weight_decay", c.train.weight_decay},
                {"max_epochs", c.train.max_epochs},
                {"batch_size", c.train.batch_size},
                {"patience", c.train.patience},
                {"validation_fraction", c.train.validation_fraction},
                {"use_kfold", c.train.use_kfold},
                {"kfold_k", c.train.kfold_k},
                {"seasonal_period", c.train.seasonal_period},
                {"mlp_hidden", c.train.mlp_hidden},
                {"rnn_hidden", c.train.rnn_hidden}}}};
}

std::string fnv1a_hex(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

std::string config_hash(const RunConfig& c) {
  return fnv1a_hex(training_config_json(c).dump());
}

json provenance(const RunConfig& c) {
  return json{{"tool_version", kToolVersion},
              {"config_hash", config_hash(c)},
              {"config", training_config_json(c)}};
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tubo::Error("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

tubo::TrainConfig member_cfg(const RunConfig& c, const PoolEntry& e) {
  tubo::TrainConfig cfg = c.train;
  cfg.window = c.w;
  if (e.period > 0) cfg.seasonal_period = e.period;
  if (e.hidden > 0) {
    cfg.mlp_hidden = e.hidden;
    cfg.rnn_hidden = e.hidden;
  }
  return cfg;
}

struct Artifacts {
  std::vector<tubo::ForecasterHandle> pool;
  tubo::BurstClassifierHandle classifier;
  tubo::CalibrationMap calibration;
};

Artifacts load_artifacts(const RunConfig& c) {
  const fs::path dir = c.models_dir;
  std::ifstream in(dir / "manifest.json");
  if (!in) throw tubo::Error("no manifest in " + c.models_dir + "; run `tubo train` first");
  json manifest;
  in >> manifest;
  if (manifest.at("config_hash").get<std::string>() != config_hash(c))
    throw tubo::Error("manifest/config hash mismatch: the artifacts in " + c.models_dir +
                      " were trained under a different config");
  Artifacts a;
  for (const auto& mj : manifest.at("models"))
    a.pool.push_back(tubo::load_forecaster((dir / mj.get<std::string>()).string()));
  a.classifier = tubo::load_burst_classifier(
      (dir / manifest.at("classifier").get<std::string>()).string());
  a.calibration = tubo::load_calibration(
      (dir / manifest.at("calibration").get<std::string>()).string());
  return a;
}

tubo::InputWindow clipped_window(const tubo::DmSeries& series,
                                 const tubo::BurstSeries& indicators, int end, int w,
                                 bool clip) {
  tubo::InputWindow iw;
  iw.length = w;
  iw.nodes = series.nodes();
  iw.values.assign(size_t(w) * iw.nodes * iw.nodes, tubo::DmSeries::sentinel());
  iw.present.assign(iw.values.size(), 0);
  for (int k = 0; k < w; ++k) {
    const int e = end - w + 1 + k;
    for (int i = 0; i < iw.nodes; ++i)
      for (int j = 0; j < iw.nodes; ++j) {
        if (!series.present(e, i, j)) continue;
        if (clip && i != j && indicators.burst(e, i, j)) continue;
        iw.values[iw.idx(k, i, j)] = series.value(e, i, j);
        iw.present[iw.idx(k, i, j)] = 1;
      }
  }
  return iw;
}

// Trailing-window burst indicators over a whole series, stride 1.
tubo::BurstSeries indicator_sweep(const tubo::DmSeries& series, int w, double threshold) {
  tubo::BurstSeries ind(series.epochs(), series.nodes());
  for (int t = w - 1; t < series.epochs(); ++t) {
    const tubo::Window win = tubo::window_at(series, t, w);
    for (int i = 0; i < series.nodes(); ++i)
      for (int j = 0; j < series.nodes(); ++j)
        if (i != j && series.present(t, i, j) &&
            tubo::detect_bursts(win, i, j, threshold).burst)
          ind.set(t, i, j, true);
  }
  return ind;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

int cmd_gen(const std::string& spec_path, const std::string& out_path, uint64_t seed) {
  tubo::SynthSpec spec = tubo::load_synth_spec(spec_path);
  if (seed != 0) spec.seed = seed;
  const tubo::SynthResult r = tubo::generate(spec);
  tubo::save_series(r.series, out_path);
  tubo::save_ground_truth(r.ground_truth, {spec.epochs}, out_path + ".truth.json");
  std::cout << "wrote " << out_path << " (" << r.series.epochs() << " epochs, "
            << r.series.nodes() << " nodes, " << r.ground_truth.count()
            << " planted bursts)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ingest / stats
// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& c, const std::string& data, const std::string& copy_to) {
  const tubo::DmSeries s = tubo::load_series(data);
  long long missing = 0, cells = 0;
  for (int t = 0; t < s.epochs(); ++t)
    for (int i = 0; i < s.nodes(); ++i)
      for (int j = 0; j < s.nodes(); ++j) {
        if (i == j) continue;
        ++cells;
        if (!s.present(t, i, j)) ++missing;
      }
  json rep;
  rep["provenance"] = provenance(c);
  rep["path"] = data;
  rep["epochs"] = s.epochs();
  rep["nodes"] = s.nodes();
  rep["granularity_minutes"] = s.granularity_minutes();
  rep["missing_fraction"] = cells > 0 ? double(missing) / double(cells) : 0.0;
  fs::create_directories(c.reports_dir);
  write_json(rep, (fs::path(c.reports_dir) / "ingest.json").string());
  if (!copy_to.empty()) tubo::save_series(s, copy_to);
  std::cout << "ingested " << data << ": T=" << s.epochs() << " N=" << s.nodes()
            << " missing=" << (cells > 0 ? double(missing) / double(cells) : 0.0)
            << "\n";
  return 0;
}

int cmd_stats(const RunConfig& c, const std::string& data, int w) {
  const tubo::DmSeries s = tubo::load_series(data);
  const tubo::BurstStatsReport r = tubo::burst_stats(s, w, c.burst_threshold);
  json rep = json::parse(r.to_json_string());
  rep["provenance"] = provenance(c);
  fs::create_directories(c.reports_dir);
  write_json(rep, (fs::path(c.reports_dir) / "stats.json").string());
  std::cout << r.to_json_string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& c) {
  if (c.data_path.empty()) throw tubo::Error("config: data_path is required");
  const tubo::DmSeries series = tubo::load_series(c.data_path);
  const auto [train_dm, test_dm] = tubo::split(series, tubo::SplitSpec{c.train_fraction});
  (void)test_dm;

  auto [bursts, clipped] = tubo::split_burst(train_dm, c.w, c.burst_threshold);
  if (!c.clip) {
    // No-clip ablation: treat every observed value as regular.
    clipped = tubo::NonBurstSeries(train_dm.epochs(), train_dm.nodes(),
                                   train_dm.granularity_minutes());
    for (int t = 0; t < train_dm.epochs(); ++t)
      for (int i = 0; i < train_dm.nodes(); ++i)
        for (int j = 0; j < train_dm.nodes(); ++j)
          clipped.set(t, i, j,
                      train_dm.present(t, i, j) ? train_dm.value(t, i, j) : 0.0,
                      train_dm.present(t, i, j) ? tubo::CellState::Present
                                                : tubo::CellState::Missing);
  }
  const tubo::NonBurstSeries train_nb = clipped.with_missing_zeroed();

  // Pool members train in parallel; each run is single-threaded and
  // self-seeded, so the result does not depend on scheduling.
  std::vector<std::future<tubo::ForecasterHandle>> jobs;
  for (size_t m = 0; m < c.pool.size(); ++m) {
    jobs.push_back(std::async(std::launch::async, [&c, &train_nb, m]() {
      const PoolEntry& e = c.pool[m];
      const tubo::NormalizationParams norm = tubo::fit_normalizer(train_nb, e.norm);
      tubo::ForecasterHandle f = tubo::train_forecaster(
          e.kind, train_nb, norm, member_cfg(c, e), tubo::derive_seed(c.seed, "model", m));
      f.dropout_rate = e.kind == tubo::ModelKind::SeasonalNaive ? 0.0 : e.dropout;
      return f;
    }));
  }
  std::vector<tubo::ForecasterHandle> pool;
  for (auto& job : jobs) pool.push_back(job.get());

  tubo::TrainConfig clf_cfg = c.train;
  clf_cfg.window = c.w;
  const tubo::BurstClassifierHandle classifier = tubo::train_burst_classifier(
      bursts, clf_cfg, tubo::derive_seed(c.seed, "burst-clf"));
  if (classifier.zero_burst_warning)
    std::cerr << "warning: training data has no bursts; classifier is always-0\n";

  // Calibration is fitted on the last 10% of training windows, never on test.
  tubo::CalibrationMap map;
  const int t_train = train_nb.epochs();
  const int val_start = std::max(c.w, t_train - std::max(1, t_train / 10));
  std::map<std::string, std::vector<tubo::CalPoint>> points;
  const tubo::BurstSeries train_ind = indicator_sweep(train_dm, c.w, c.burst_threshold);
  for (size_t m = 0; m < pool.size(); ++m) {
    const tubo::ForecasterHandle& f = pool[m];
    std::vector<tubo::CalPoint>& pts = points[f.model_id];
    for (int t = val_start - 1; t + 1 < t_train; ++t) {
      const tubo::InputWindow iw = clipped_window(train_dm, train_ind, t, c.w, c.clip);
      const tubo::McPrediction mc = tubo::mc_predict(
          f, iw, c.mc_passes, tubo::derive_seed(c.seed, "cal", uint64_t(t) * 101 + m));
      for (int i = 0; i < train_dm.nodes(); ++i)
        for (int j = 0; j < train_dm.nodes(); ++j) {
          if (i == j || !train_nb.usable(t + 1, i, j)) continue;
          const size_t cell = size_t(i) * train_dm.nodes() + j;
          pts.push_back({mc.mu[cell], mc.sigma[cell], train_nb.value(t + 1, i, j)});
        }
    }
  }
  if (c.calibration) {
    map = tubo::fit_calibration(points);
  } else {
    for (const auto& f : pool) map.entries[f.model_id] = tubo::ModelCalibration{};
  }

  fs::create_directories(c.models_dir);
  json manifest;
  manifest["format"] = "tubo-manifest-v1";
  manifest["tool_version"] = kToolVersion;
  manifest["config_hash"] = config_hash(c);
  json model_files = json::array();
  for (const auto& f : pool) {
    const std::string file = "model_" + f.model_id + ".json";
    tubo::save_forecaster(f, (fs::path(c.models_dir) / file).string());
    model_files.push_back(file);
  }
  manifest["models"] = model_files;
  tubo::save_burst_classifier(classifier,
                              (fs::path(c.models_dir) / "burst_classifier.json").string());
  manifest["classifier"] = "burst_classifier.json";
  tubo::save_calibration(map, (fs::path(c.models_dir) / "calibration.json").string());
  manifest["calibration"] = "calibration.json";
  write_json(manifest, (fs::path(c.models_dir) / "manifest.json").string());
  std::cout << "trained " << pool.size() << " models -> " << c.models_dir
            << " (config " << config_hash(c) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

json correlation_section(const tubo::OnlineResult& result, const tubo::DmSeries& truth) {
  json out = json::object();
  const int n = result.nodes;
  for (size_t m = 0; m < result.model_ids.size(); ++m) {
    std::vector<tubo::WindowStat> stats;
    for (const tubo::ForecastOutcome& o : result.outcomes) {
      if (o.model_mu.size() <= m || o.scores.size() <= m) continue;
      tubo::WindowStat ws;
      double abs_sum = 0.0;
      int count = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (i == j || !truth.present(o.epoch, i, j)) continue;
          abs_sum += std::abs(o.model_mu[m][size_t(i) * n + j] -
                              truth.value(o.epoch, i, j));
          ++count;
        }
      if (count == 0) continue;
      ws.mae = abs_sum / count;
      ws.mean_sigma = o.raw_scores[m];
      ws.mean_sigma_cal = o.scores[m];
      stats.push_back(ws);
    }
    json entry;
    entry["windows"] = stats.size();
    if (stats.size() >= 30) {
      const tubo::CorrelationEntry e =
          tubo::correlation_report(result.model_ids[m], stats);
      entry["r_raw"] = e.r_raw ? json(*e.r_raw) : json();
      entry["r_calibrated"] = e.r_cal ? json(*e.r_cal) : json();
    } else {
      entry["r_raw"] = nullptr;
      entry["r_calibrated"] = nullptr;
    }
    out[result.model_ids[m]] = entry;
  }
  return out;
}

// Per-member deterministic one-step MAE over the test sweep; paired with a
// raw-trained pool this is the burst-clipping ablation.
json ablation_mae(const RunConfig& c, const std::vector<tubo::ForecasterHandle>& pool,
                  const tubo::DmSeries& series, int first_end, bool clip) {
  const tubo::BurstSeries ind = indicator_sweep(series, c.w, c.burst_threshold);
  json out = json::object();
  for (const tubo::ForecasterHandle& f : pool) {
    double abs_sum = 0.0;
    long long count = 0;
    for (int t = first_end; t + 1 < series.epochs(); ++t) {
      const tubo::InputWindow iw = clipped_window(series, ind, t, c.w, clip);
      const tubo::DemandMatrix pred = tubo::predict(f, iw);
      for (int i = 0; i < series.nodes(); ++i)
        for (int j = 0; j < series.nodes(); ++j) {
          if (i == j || !series.present(t + 1, i, j)) continue;
          abs_sum += std::abs(pred.at(i, j) - series.value(t + 1, i, j));
          ++count;
        }
    }
    out[f.model_id] = count > 0 ? abs_sum / count : 0.0;
  }
  return out;
}

int cmd_evaluate(const RunConfig& c, bool no_clip_ablation) {
  const Artifacts art = load_artifacts(c);
  const tubo::DmSeries series = tubo::load_series(c.data_path);
  const int t_train = int(std::floor(series.epochs() * c.train_fraction));

  tubo::OnlineConfig ocfg;
  ocfg.w = c.w;
  ocfg.threshold = c.burst_threshold;
  ocfg.mc_passes = c.mc_passes;
  ocfg.seed = tubo::derive_seed(c.seed, "online");
  ocfg.clip_inputs = c.clip;
  ocfg.first_forecast_end = t_train - 1;
  const tubo::OnlineResult result =
      tubo::run_online(series, art.pool, art.classifier, art.calibration, ocfg);

  const tubo::MetricsReport metrics = tubo::evaluate(result, series);
  const tubo::PerOdMaeCdf cdf = per_od_mae_cdf(result, series);

  json rep = json::parse(metrics.to_json_string());
  rep["provenance"] = provenance(c);
  rep["correlation"] = correlation_section(result, series);
  rep["excluded_od_pairs"] = cdf.excluded_pairs;

  if (no_clip_ablation) {
    const auto [train_dm, test_dm] = tubo::split(series, tubo::SplitSpec{c.train_fraction});
    (void)test_dm;
    tubo::NonBurstSeries raw_nb(train_dm.epochs(), train_dm.nodes(),
                                train_dm.granularity_minutes());
    for (int t = 0; t < train_dm.epochs(); ++t)
      for (int i = 0; i < train_dm.nodes(); ++i)
        for (int j = 0; j < train_dm.nodes(); ++j)
          raw_nb.set(t, i, j,
                     train_dm.present(t, i, j) ? train_dm.value(t, i, j) : 0.0,
                     train_dm.present(t, i, j) ? tubo::CellState::Present
                                               : tubo::CellState::Missing);
    std::vector<tubo::ForecasterHandle> raw_pool;
    for (size_t m = 0; m < c.pool.size(); ++m) {
      const PoolEntry& e = c.pool[m];
      const tubo::NormalizationParams norm = tubo::fit_normalizer(raw_nb, e.norm);
      raw_pool.push_back(tubo::train_forecaster(e.kind, raw_nb, norm, member_cfg(c, e),
                                                tubo::derive_seed(c.seed, "model", m)));
    }
    rep["clip_ablation"] = {
        {"mae_with_clipping", ablation_mae(c, art.pool, series, t_train - 1, true)},
        {"mae_without_clipping",
         ablation_mae(c, raw_pool, series, t_train - 1, false)}};
  }

  fs::create_directories(c.reports_dir);
  const fs::path dir = c.reports_dir;
  write_json(rep, (dir / "metrics.json").string());
  tubo::write_outcomes_jsonl(result, (dir / "outcomes.jsonl").string());
  tubo::write_selection_jsonl(result, (dir / "selection_records.jsonl").string());
  tubo::write_cdf_csv(cdf, (dir / "per_od_mae_cdf.csv").string());

  std::cout << "masked MAE: " << metrics.masked_mae
            << " Mbps, burst accuracy: " << metrics.burst_accuracy << "\n";
  for (const auto& [id, ratio] : metrics.selection_ratios)
    std::cout << "  selected " << id << ": " << ratio * 100.0 << "%\n";
  return 0;
}

// ---------------------------------------------------------------------------
// te-sim
// ---------------------------------------------------------------------------

tubo::OnlineResult strategy_outcomes(const RunConfig& c, const tubo::DmSeries& series,
                                     const tubo::OnlineResult& base,
                                     const std::vector<tubo::ForecasterHandle>& pool,
                                     const std::string& strategy) {
  tubo::OnlineResult r = base;
  if (strategy == "tubo") return r;
  const int n = series.nodes();
  const tubo::BurstSeries ind = indicator_sweep(series, c.w, c.burst_threshold);

  const tubo::ForecasterHandle* single = nullptr;
  if (strategy == "single") {
    // The standalone baseline: best member by raw-space validation MAE,
    // which is comparable across normalization schemes.
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : pool)
      if (f.val_mae_mbps < best) {
        best = f.val_mae_mbps;
        single = &f;
      }
    if (!single) single = &pool.front();
  }

  for (tubo::ForecastOutcome& o : r.outcomes) {
    o.fallback.assign(size_t(n) * n, 0);
    o.burst_pred.assign(size_t(n) * n, 0);
    o.scores.clear();
    o.raw_scores.clear();
    o.model_mu.clear();
    if (strategy == "oracle") {
      o.chosen_model = "oracle";
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          o.values[size_t(i) * n + j] =
              (i != j && series.present(o.epoch, i, j)) ? series.value(o.epoch, i, j)
                                                        : 0.0;
      continue;
    }
    const tubo::InputWindow iw = clipped_window(series, ind, o.epoch - 1, c.w, c.clip);
    if (strategy == "ensemble") {
      o.chosen_model = "ensemble";
      o.values = tubo::ensemble_predict(pool, iw).values;
    } else if (strategy == "single") {
      o.chosen_model = single->model_id;
      o.values = tubo::predict(*single, iw).values;
    } else {
      throw tubo::Error("unknown strategy " + strategy);
    }
  }
  return r;
}

int cmd_te(const RunConfig& c, const std::string& objective_flag, int k_override) {
  if (c.topology_path.empty()) throw tubo::Error("config: topology_path is required");
  const tubo::Topology topo = tubo::load_topology(c.topology_path);
  const Artifacts art = load_artifacts(c);
  const tubo::DmSeries series = tubo::load_series(c.data_path);
  const fs::path dir = c.reports_dir;
  const std::string outcomes_path = (dir / "outcomes.jsonl").string();
  if (!fs::exists(outcomes_path))
    throw tubo::Error("no outcomes at " + outcomes_path + "; run `tubo evaluate` first");
  const tubo::OnlineResult base = tubo::read_outcomes_jsonl(outcomes_path);
  const int k = k_override > 0 ? k_override : c.k_paths;

  std::vector<tubo::TeObjective> objectives;
  if (objective_flag == "p1") objectives = {tubo::TeObjective::P1};
  else if (objective_flag == "p2") objectives = {tubo::TeObjective::P2};
  else objectives = {tubo::TeObjective::P1, tubo::TeObjective::P2};

  std::vector<int> epochs;
  for (const auto& o : base.outcomes) epochs.push_back(o.epoch);

  for (tubo::TeObjective obj : objectives) {
    for (const std::string strategy : {"oracle", "tubo", "ensemble", "single"}) {
      const tubo::OnlineResult outcomes =
          strategy_outcomes(c, series, base, art.pool, strategy);
      const tubo::DegradationReport report =
          tubo::degradation_sweep(outcomes, series, topo, obj, k);
      json rep = json::parse(report.to_json_string());
      rep["provenance"] = provenance(c);
      rep["strategy"] = strategy;
      rep["objective"] = tubo::to_string(obj);
      const std::string stem = "te_" + strategy + "_" + tubo::to_string(obj);
      write_json(rep, (dir / (stem + ".json")).string());
      tubo::write_degradation_csv(report, (dir / (stem + ".csv")).string());
      std::cout << stem << ": median degradation " << report.median << "\n";
    }
    const tubo::DegradationReport reactive =
        tubo::degradation_sweep_reactive(epochs, series, topo, obj, k);
    json rep = json::parse(reactive.to_json_string());
    rep["provenance"] = provenance(c);
    rep["strategy"] = "reactive";
    rep["objective"] = tubo::to_string(obj);
    const std::string stem = "te_reactive_" + tubo::to_string(obj);
    write_json(rep, (dir / (stem + ".json")).string());
    tubo::write_degradation_csv(reactive, (dir / (stem + ".csv")).string());
    std::cout << stem << ": median degradation " << reactive.median << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tubo: burst-aware demand-matrix forecasting and proactive TE"};
  app.require_subcommand(1);

  std::string config_path, spec_path, out_path, data_path, copy_to;
  std::string norm_override = "all", objective = "both";
  uint64_t seed_override = 0;
  int w_flag = 0, k_flag = 0, passes_flag = 0;
  bool no_clip = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dm-csv from a spec file");
  gen->add_option("--spec", spec_path, "synthetic spec JSON")->required();
  gen->add_option("--out", out_path, "output dm-csv path")->required();
  gen->add_option("--seed", seed_override, "override the spec seed");

  auto* ingest = app.add_subcommand("ingest", "validate and summarize a dm-csv file");
  ingest->add_option("--config", config_path, "run config JSON");
  ingest->add_option("--data", data_path, "dm-csv path")->required();
  ingest->add_option("--copy-to", copy_to, "write a normalized copy here");

  auto* stats = app.add_subcommand("stats", "burst statistics report");
  stats->add_option("--config", config_path, "run config JSON");
  stats->add_option("--data", data_path, "dm-csv path")->required();
  stats->add_option("--w", w_flag, "detection window length");

  auto* train = app.add_subcommand("train", "train the pool, classifier and calibration");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--seed", seed_override, "override the config seed");
  train->add_option("--norm", norm_override, "force one normalization scheme")
      ->check(CLI::IsMember({"glob", "indv", "roll", "all"}));
  train->add_option("--passes", passes_flag, "MC passes override");
  train->add_flag("--no-clip", no_clip, "skip burst clipping (ablation)");

  auto* evaluate = app.add_subcommand("evaluate", "run the online sweep on the test split");
  evaluate->add_option("--config", config_path, "run config JSON")->required();
  evaluate->add_option("--seed", seed_override, "override the config seed");
  evaluate->add_option("--passes", passes_flag, "MC passes override");
  evaluate->add_flag("--no-clip", no_clip,
                     "additionally report the clipping ablation MAE pair");

  auto* te = app.add_subcommand("te-sim", "proactive-TE degradation sweep");
  te->add_option("--config", config_path, "run config JSON")->required();
  te->add_option("--objective", objective, "p1, p2 or both")
      ->check(CLI::IsMember({"p1", "p2", "both"}));
  te->add_option("--k", k_flag, "candidate paths per OD pair");
  te->add_option("--seed", seed_override, "override the config seed");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    else if (const char* env = std::getenv("TUBO_REPORT_DIR")) cfg.reports_dir = env;
    if (seed_override != 0) cfg.seed = seed_override;
    if (passes_flag > 0) cfg.mc_passes = passes_flag;
    if (norm_override != "all")
      for (PoolEntry& e : cfg.pool) e.norm = tubo::norm_scheme_from_string(norm_override);

    if (gen->parsed()) return cmd_gen(spec_path, out_path, seed_override);
    if (ingest->parsed()) return cmd_ingest(cfg, data_path, copy_to);
    if (stats->parsed()) return cmd_stats(cfg, data_path, w_flag > 0 ? w_flag : cfg.w);
    if (train->parsed()) {
      if (no_clip) cfg.clip = false;
      return cmd_train(cfg);
    }
    if (evaluate->parsed()) return cmd_evaluate(cfg, no_clip);
    if (te->parsed()) return cmd_te(cfg, objective, k_flag);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

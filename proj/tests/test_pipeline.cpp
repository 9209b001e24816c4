#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "tubo/pipeline.hpp"
#include "tubo/rng.hpp"
#include "tubo/synth.hpp"

using namespace tubo;

namespace {

// Classifier whose probability is ~1 everywhere (bias >> 0) or ~0 (bias << 0).
BurstClassifierHandle fixed_classifier(int w, int n, double bias) {
  BurstClassifierHandle c;
  c.window = w;
  c.nodes = n;
  c.parameters.assign(size_t(2) * w + 1, 0.0);
  c.parameters.back() = bias;
  return c;
}

// Classifier firing exactly when the OD's own indicator at lag `period-1`
// from the window end is set (periodic-burst oracle).
BurstClassifierHandle periodic_classifier(int w, int n, int period) {
  BurstClassifierHandle c;
  c.window = w;
  c.nodes = n;
  c.parameters.assign(size_t(2) * w + 1, 0.0);
  c.parameters[size_t(w) - period] = 40.0;  // own-lag feature weight
  c.parameters.back() = -20.0;
  return c;
}

ForecasterHandle constant_model(const std::string& id, double value, int w, int n) {
  ForecasterHandle f;
  f.kind = ModelKind::LinearAr;
  f.model_id = id;
  f.window = w;
  f.nodes = n;
  f.dropout_rate = 0.0;
  f.norm.scheme = NormScheme::Glob;
  f.norm.nodes = n;
  f.norm.glob_mu = 0.0;
  f.norm.glob_sigma = 1.0;
  f.parameters.assign(size_t(w) + 1, 0.0);
  f.parameters[w] = value;
  return f;
}

CalibrationMap flat_map(const std::vector<ForecasterHandle>& pool) {
  CalibrationMap map;
  for (const auto& f : pool) map.entries[f.model_id] = {1.0, 0.1, 0.0, false, 0.0};
  return map;
}

DmSeries constant_series(int t, int n, double value) {
  DmSeries s(n, 5);
  std::vector<double> row(size_t(n) * n, value);
  std::vector<uint8_t> mask(size_t(n) * n, 1);
  for (int e = 0; e < t; ++e) s.push_epoch(row, mask);
  return s;
}

}  // namespace

TEST_CASE("all-clear classifier routes every pair through the forecast") {
  const int w = 8, n = 2;
  const DmSeries series = constant_series(30, n, 5.0);
  const std::vector<ForecasterHandle> pool = {constant_model("m", 5.0, w, n)};
  OnlineConfig cfg;
  cfg.w = w;
  cfg.mc_passes = 4;
  const OnlineResult r = run_online(series, pool, fixed_classifier(w, n, -30.0),
                                    flat_map(pool), cfg);
  REQUIRE(!r.outcomes.empty());
  for (const ForecastOutcome& o : r.outcomes) {
    CHECK(o.chosen_model == "m");
    for (int od : {1, 2}) {
      CHECK(o.fallback[od] == 0);
      CHECK(o.values[od] == doctest::Approx(5.0));
    }
  }
}

TEST_CASE("all-burst classifier falls back everywhere, no selection performed") {
  const int w = 8, n = 2;
  const DmSeries series = constant_series(30, n, 7.0);
  const std::vector<ForecasterHandle> pool = {constant_model("m", 3.0, w, n)};
  OnlineConfig cfg;
  cfg.w = w;
  cfg.mc_passes = 4;
  const OnlineResult r = run_online(series, pool, fixed_classifier(w, n, 30.0),
                                    flat_map(pool), cfg);
  for (const ForecastOutcome& o : r.outcomes) {
    CHECK(o.chosen_model.empty());
    for (int od : {1, 2}) {
      CHECK(o.fallback[od] == 1);
      CHECK(o.values[od] == doctest::Approx(7.0));  // last measurement
    }
  }
}

TEST_CASE("planted burst with a perfect classifier falls back on that pair only") {
  // period == w: each detection window holds at most one planted spike while
  // the lag w-period = 0 still sits inside the classifier window.
  const int w = 12, n = 3;
  const int period = 12;
  SynthSpec spec;
  spec.node_count = n;
  spec.epochs = 200;
  spec.period = 20;
  spec.mean_total_mbps = 120.0;
  spec.spatial_variance = 4.0;
  spec.temporal_variance = 50.0;
  spec.seed = 5;
  PeriodicBurstPlan plan;
  plan.start_epoch = 36;
  plan.period = period;
  plan.pairs = {{0, 1}};
  plan.multiplier = 25.0;
  spec.periodic_bursts = plan;
  const SynthResult synth = generate(spec);

  const std::vector<ForecasterHandle> pool = {constant_model("m", 1.0, w, n)};
  OnlineConfig cfg;
  cfg.w = w;
  cfg.mc_passes = 4;
  const OnlineResult r = run_online(synth.series, pool,
                                    periodic_classifier(w, n, period),
                                    flat_map(pool), cfg);

  int fallbacks = 0;
  for (const ForecastOutcome& o : r.outcomes) {
    const bool planted = o.epoch >= 36 + period && (o.epoch - 36) % period == 0;
    const size_t od01 = 1;
    if (planted) {
      CHECK(o.fallback[od01] == 1);
      // Stand-in is the epoch-t measurement, one epoch before the burst.
      CHECK(o.values[od01] ==
            doctest::Approx(synth.series.value(o.epoch - 1, 0, 1)));
      ++fallbacks;
    } else {
      CHECK(o.fallback[od01] == 0);
    }
    // Other pairs never fall back.
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && !(i == 0 && j == 1))
          CHECK(o.fallback[size_t(i) * n + j] == 0);
  }
  CHECK(fallbacks > 5);
}

TEST_CASE("evaluate: exact forecasts give zero MAE") {
  const int w = 8, n = 2;
  const DmSeries series = constant_series(40, n, 5.0);
  const std::vector<ForecasterHandle> pool = {constant_model("m", 5.0, w, n)};
  OnlineConfig cfg;
  cfg.w = w;
  cfg.mc_passes = 4;
  const OnlineResult r = run_online(series, pool, fixed_classifier(w, n, -30.0),
                                    flat_map(pool), cfg);
  const MetricsReport rep = evaluate(r, series);
  CHECK(rep.masked_mae == doctest::Approx(0.0));
  CHECK(rep.burst_accuracy == doctest::Approx(1.0));
  CHECK(!rep.identification_defined);  // constant series has no bursts
  CHECK(rep.selection_ratios.at("m") == doctest::Approx(1.0));
}

TEST_CASE("evaluate MAE arithmetic: one element off by 6 among 12") {
  OnlineResult r;
  r.w = 8;
  r.nodes = 2;
  r.model_ids = {"m"};
  DmSeries truth = constant_series(20, 2, 10.0);
  for (int e = 10; e < 16; ++e) {
    ForecastOutcome o;
    o.epoch = e;
    o.values.assign(4, 10.0);
    o.fallback.assign(4, 0);
    o.burst_pred.assign(4, 0);
    if (e == 10) o.values[1] = 16.0;  // single 6 Mbps miss
    o.chosen_model = "m";
    r.outcomes.push_back(o);
  }
  const MetricsReport rep = evaluate(r, truth);
  CHECK(rep.mae_positions == 12);
  CHECK(rep.masked_mae == doctest::Approx(0.5));
}

TEST_CASE("confusion-matrix hand count: [1,0,1,1] vs [1,0,0,1]") {
  // Four classified positions: OD (0,1) at widely spaced epochs so each
  // detection window holds at most one spike; OD (1,0) is masked out there.
  const int w = 8;
  const std::vector<int> eval_epochs = {10, 25, 40, 55};
  const std::vector<int> burst_epochs = {10, 40, 55};  // actual = [1,0,1,1]
  DmSeries truth(2, 5);
  for (int e = 0; e < 60; ++e) {
    const bool b = std::find(burst_epochs.begin(), burst_epochs.end(), e) !=
                   burst_epochs.end();
    const bool evaluated = std::find(eval_epochs.begin(), eval_epochs.end(), e) !=
                           eval_epochs.end();
    truth.push_epoch({0.0, b ? 500.0 : 10.0, 10.0, 0.0},
                     {1, 1, uint8_t(evaluated ? 0 : 1), 1});
  }
  OnlineResult r;
  r.w = w;
  r.nodes = 2;
  r.model_ids = {"m"};
  const std::vector<int> pred_on = {10, 55};  // predictions = [1,0,0,1]
  for (int e : eval_epochs) {
    ForecastOutcome o;
    o.epoch = e;
    o.values.assign(4, 10.0);
    o.fallback.assign(4, 0);
    o.burst_pred.assign(4, 0);
    if (std::find(pred_on.begin(), pred_on.end(), e) != pred_on.end())
      o.burst_pred[1] = 1;
    r.outcomes.push_back(o);
  }
  const MetricsReport rep = evaluate(r, truth);
  CHECK(rep.burst_classified == 4);
  CHECK(rep.actual_bursts == 3);
  CHECK(rep.burst_identification == doctest::Approx(2.0 / 3.0));
  CHECK(rep.burst_accuracy == doctest::Approx(0.75));
}

TEST_CASE("per-OD MAE CDF isolates a single bad pair") {
  OnlineResult r;
  r.w = 8;
  r.nodes = 2;
  const DmSeries truth = constant_series(30, 2, 10.0);
  for (int e = 10; e < 20; ++e) {
    ForecastOutcome o;
    o.epoch = e;
    o.values.assign(4, 10.0);
    o.values[2] = 14.0;  // OD (1,0) consistently off by 4
    o.fallback.assign(4, 0);
    o.burst_pred.assign(4, 0);
    r.outcomes.push_back(o);
  }
  const PerOdMaeCdf cdf = per_od_mae_cdf(r, truth);
  REQUIRE(cdf.sorted_mae.size() == 2);
  CHECK(cdf.sorted_mae[0] == doctest::Approx(0.0));
  CHECK(cdf.sorted_mae[1] == doctest::Approx(4.0));
  CHECK(cdf.excluded_pairs == 0);
}

TEST_CASE("uniform errors give a constant CDF") {
  OnlineResult r;
  r.w = 8;
  r.nodes = 2;
  const DmSeries truth = constant_series(30, 2, 10.0);
  for (int e = 10; e < 20; ++e) {
    ForecastOutcome o;
    o.epoch = e;
    o.values.assign(4, 12.5);
    o.fallback.assign(4, 0);
    o.burst_pred.assign(4, 0);
    r.outcomes.push_back(o);
  }
  const PerOdMaeCdf cdf = per_od_mae_cdf(r, truth);
  for (double m : cdf.sorted_mae) CHECK(m == doctest::Approx(2.5));
}

TEST_CASE("causality: poisoning epoch t+1 leaves the forecast bit-identical") {
  const int w = 8, n = 2;
  DmSeries series(n, 5);
  Rng rng(3);
  std::vector<uint8_t> mask(4, 1);
  for (int e = 0; e < 25; ++e)
    series.push_epoch({0.0, 5.0 + rng.u01(), 6.0 + rng.u01(), 0.0}, mask);

  // Pool with dropout so the MC path and its seeds are exercised too.
  ForecasterHandle m = constant_model("m", 5.0, w, n);
  m.dropout_rate = 0.2;
  for (int k = 0; k < w; ++k) m.parameters[k] = 0.1;
  const std::vector<ForecasterHandle> pool = {m};
  OnlineConfig cfg;
  cfg.w = w;
  cfg.mc_passes = 8;
  cfg.seed = 99;

  const int target_epoch = 15;
  DmSeries poisoned(n, 5);
  for (int e = 0; e < 25; ++e) {
    std::vector<double> row = {0.0, series.value(e, 0, 1), series.value(e, 1, 0), 0.0};
    if (e == target_epoch) {
      row[1] = 400.0;
      row[2] = 700.0;
    }
    poisoned.push_epoch(row, mask);
  }

  const auto clf = fixed_classifier(w, n, -30.0);
  const OnlineResult a = run_online(series, pool, clf, flat_map(pool), cfg);
  const OnlineResult b = run_online(poisoned, pool, clf, flat_map(pool), cfg);
  const ForecastOutcome* oa = nullptr;
  const ForecastOutcome* ob = nullptr;
  for (const auto& o : a.outcomes)
    if (o.epoch == target_epoch) oa = &o;
  for (const auto& o : b.outcomes)
    if (o.epoch == target_epoch) ob = &o;
  REQUIRE(oa != nullptr);
  REQUIRE(ob != nullptr);
  CHECK(oa->values == ob->values);
  CHECK(oa->scores == ob->scores);
}

TEST_CASE("previously emitted outcomes never change as the sweep advances") {
  const int w = 8, n = 2;
  const DmSeries series = constant_series(40, n, 3.0);
  const std::vector<ForecasterHandle> pool = {constant_model("m", 3.0, w, n)};
  OnlineConfig cfg;
  cfg.w = w;
  cfg.mc_passes = 4;
  const auto clf = fixed_classifier(w, n, -30.0);
  const OnlineResult full = run_online(series, pool, clf, flat_map(pool), cfg);

  DmSeries shorter(n, 5);
  std::vector<uint8_t> mask(4, 1);
  for (int e = 0; e < 30; ++e)
    shorter.push_epoch({0.0, 3.0, 3.0, 0.0}, mask);
  const OnlineResult prefix = run_online(shorter, pool, clf, flat_map(pool), cfg);
  for (size_t k = 0; k < prefix.outcomes.size(); ++k) {
    CHECK(prefix.outcomes[k].epoch == full.outcomes[k].epoch);
    CHECK(prefix.outcomes[k].values == full.outcomes[k].values);
  }
}

TEST_CASE("flipping a masked-missing truth value never changes the report") {
  const int w = 8, n = 2;
  DmSeries truth(n, 5);
  std::vector<uint8_t> mask = {1, 1, 1, 1};
  for (int e = 0; e < 30; ++e) {
    std::vector<uint8_t> m = mask;
    if (e == 20) m[1] = 0;  // missing at evaluation epoch
    truth.push_epoch({0.0, 8.0, 8.0, 0.0}, m);
  }
  OnlineResult r;
  r.w = w;
  r.nodes = n;
  r.model_ids = {"m"};
  for (int e = 15; e < 25; ++e) {
    ForecastOutcome o;
    o.epoch = e;
    o.values.assign(4, 8.0);
    o.fallback.assign(4, 0);
    o.burst_pred.assign(4, 0);
    r.outcomes.push_back(o);
  }
  const MetricsReport rep1 = evaluate(r, truth);

  DmSeries flipped(n, 5);
  for (int e = 0; e < 30; ++e) {
    std::vector<uint8_t> m = mask;
    std::vector<double> row = {0.0, 8.0, 8.0, 0.0};
    if (e == 20) {
      m[1] = 0;
      row[1] = 12345.0;  // sentinel-side value, must be unreadable
    }
    flipped.push_epoch(row, m);
  }
  const MetricsReport rep2 = evaluate(r, flipped);
  CHECK(rep1.masked_mae == rep2.masked_mae);
  CHECK(rep1.mae_positions == rep2.mae_positions);
  CHECK(rep1.burst_accuracy == rep2.burst_accuracy);
}

TEST_CASE("fallback stand-in equals the last measured value exactly") {
  const int w = 8, n = 2;
  DmSeries series(n, 5);
  std::vector<uint8_t> full(4, 1);
  Rng rng(8);
  std::vector<double> last_vals;
  for (int e = 0; e < 25; ++e) {
    const double v = 3.0 + rng.u01() * 2.0;
    // OD (0,1) goes missing on odd epochs; the fallback must reach back to
    // the last present measurement.
    std::vector<uint8_t> m = full;
    if (e % 2 == 1) m[1] = 0;
    series.push_epoch({0.0, v, 4.0, 0.0}, m);
    if (e % 2 == 0) last_vals.push_back(v);
  }
  const std::vector<ForecasterHandle> pool = {constant_model("m", 1.0, w, n)};
  OnlineConfig cfg;
  cfg.w = w;
  cfg.mc_passes = 4;
  const OnlineResult r = run_online(series, pool, fixed_classifier(w, n, 30.0),
                                    flat_map(pool), cfg);
  for (const ForecastOutcome& o : r.outcomes) {
    const int t = o.epoch - 1;
    int last_present = t;
    while (last_present >= 0 && !series.present(last_present, 0, 1)) --last_present;
    REQUIRE(last_present >= 0);
    CHECK(o.values[1] == series.value(last_present, 0, 1));
  }
}

TEST_CASE("outcome and selection emitters write parseable lines") {
  const int w = 8, n = 2;
  const DmSeries series = constant_series(30, n, 5.0);
  const std::vector<ForecasterHandle> pool = {constant_model("m", 5.0, w, n)};
  OnlineConfig cfg;
  cfg.w = w;
  cfg.mc_passes = 4;
  const OnlineResult r = run_online(series, pool, fixed_classifier(w, n, -30.0),
                                    flat_map(pool), cfg);
  write_outcomes_jsonl(r, "test_pipeline_outcomes.jsonl");
  write_selection_jsonl(r, "test_pipeline_selection.jsonl");
  const PerOdMaeCdf cdf = per_od_mae_cdf(r, series);
  write_cdf_csv(cdf, "test_pipeline_cdf.csv");
  const OnlineResult back = read_outcomes_jsonl("test_pipeline_outcomes.jsonl");
  REQUIRE(back.outcomes.size() == r.outcomes.size());
  CHECK(back.w == r.w);
  CHECK(back.model_ids == r.model_ids);
  for (size_t k = 0; k < back.outcomes.size(); ++k) {
    CHECK(back.outcomes[k].epoch == r.outcomes[k].epoch);
    CHECK(back.outcomes[k].values == r.outcomes[k].values);
    CHECK(back.outcomes[k].fallback == r.outcomes[k].fallback);
  }
  std::remove("test_pipeline_outcomes.jsonl");
  std::remove("test_pipeline_selection.jsonl");
  std::remove("test_pipeline_cdf.csv");
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "tubo/rng.hpp"
#include "tubo/selection.hpp"

using namespace tubo;

namespace {

// Perfectly calibrated stream: residuals are N(0, sigma^2) with the model's
// own sigma.
std::vector<CalPoint> calibrated_stream(int n, double scale, uint64_t seed) {
  Rng rng(seed);
  std::vector<CalPoint> pts;
  for (int k = 0; k < n; ++k) {
    CalPoint p;
    p.mu = 50.0 + 10.0 * rng.normal();
    p.sigma = scale * (0.5 + rng.u01());
    p.y_true = p.mu + p.sigma * rng.normal();
    pts.push_back(p);
  }
  return pts;
}

// linear-ar with zero weights and a bias chosen so the denormalized
// prediction equals `value` everywhere.
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

InputWindow flat_window(int w, int n, double value) {
  InputWindow iw;
  iw.length = w;
  iw.nodes = n;
  iw.values.assign(size_t(w) * n * n, value);
  iw.present.assign(iw.values.size(), 1);
  return iw;
}

}  // namespace

TEST_CASE("well-calibrated stream fits near the identity") {
  std::map<std::string, std::vector<CalPoint>> pts;
  pts["m"] = calibrated_stream(4000, 2.0, 11);
  const CalibrationMap map = fit_calibration(pts);
  const ModelCalibration& cal = map.entries.at("m");
  CHECK(cal.a == doctest::Approx(1.0).epsilon(0.1));
  CHECK(std::abs(cal.b) < 0.25);
  CHECK(std::abs(cal.c) < 0.1);
}

TEST_CASE("sigma at half the true scale fits a near 2") {
  Rng rng(12);
  std::vector<CalPoint> pts;
  for (int k = 0; k < 4000; ++k) {
    CalPoint p;
    p.mu = 20.0;
    const double true_scale = 1.0 + rng.u01();
    p.sigma = 0.5 * true_scale;
    p.y_true = p.mu + true_scale * rng.normal();
    pts.push_back(p);
  }
  const CalibrationMap map = fit_calibration({{"m", pts}});
  CHECK(map.entries.at("m").a == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("constant-zero sigma degenerates to b = residual std") {
  Rng rng(13);
  std::vector<CalPoint> pts;
  const double resid_std = 3.0;
  for (int k = 0; k < 2000; ++k) {
    CalPoint p;
    p.mu = 10.0;
    p.sigma = 0.0;
    p.y_true = p.mu + resid_std * rng.normal();
    pts.push_back(p);
  }
  const CalibrationMap map = fit_calibration({{"m", pts}});
  const ModelCalibration& cal = map.entries.at("m");
  CHECK(cal.degenerate);
  CHECK(cal.a == 0.0);
  CHECK(cal.b == doctest::Approx(resid_std).epsilon(0.1));
}

TEST_CASE("fit_calibration rejects short or non-finite streams") {
  std::map<std::string, std::vector<CalPoint>> pts;
  pts["m"] = calibrated_stream(49, 1.0, 5);
  CHECK_THROWS_AS(fit_calibration(pts), Error);
  pts["m"] = calibrated_stream(60, 1.0, 5);
  pts["m"][3].sigma = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_calibration(pts), Error);
}

TEST_CASE("calibrate applies the affine map with clamps") {
  CalibrationMap map;
  map.entries["id"] = {1.0, 0.0, 0.0, false, 0.0};
  map.entries["scaled"] = {2.0, 0.1, 0.0, false, 0.0};
  map.entries["shifted"] = {1.0, 0.0, -5.0, false, 0.0};

  McPrediction pred;
  pred.nodes = 2;
  pred.mu = {0.0, 3.0, 1.0, 0.0};
  pred.sigma = {0.0, 0.2, 0.4, 0.0};

  const CalibratedPrediction ident = calibrate(pred, map, "id");
  CHECK(ident.mu_hat[1] == 3.0);
  CHECK(ident.sigma_hat[1] == doctest::Approx(0.2));

  const CalibratedPrediction scaled = calibrate(pred, map, "scaled");
  CHECK(scaled.sigma_hat[1] == doctest::Approx(0.5));  // 2*0.2 + 0.1

  const CalibratedPrediction shifted = calibrate(pred, map, "shifted");
  CHECK(shifted.mu_hat[1] == 0.0);  // 3 - 5 clamps to 0

  CHECK_THROWS_AS(calibrate(pred, map, "unknown"), Error);
}

TEST_CASE("sigma_hat is strictly increasing in sigma for a > 0") {
  CalibrationMap map;
  map.entries["m"] = {1.7, 0.05, 0.0, false, 0.0};
  McPrediction lo, hi;
  lo.nodes = hi.nodes = 2;
  lo.mu = hi.mu = {0, 1, 1, 0};
  lo.sigma = {0, 0.1, 0.1, 0};
  hi.sigma = {0, 0.3, 0.3, 0};
  CHECK(calibrate(hi, map, "m").sigma_hat[1] > calibrate(lo, map, "m").sigma_hat[1]);
}

TEST_CASE("choose_best takes the argmin with first-index ties") {
  CHECK(choose_best({0.5, 0.2, 0.9}) == 1);
  CHECK(choose_best({0.4, 0.4, 0.9}) == 0);
  CHECK_THROWS_AS(choose_best({}), Error);
}

TEST_CASE("argmin is invariant under shared strictly increasing transforms") {
  Rng rng(21);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> scores;
    for (int m = 0; m < 4; ++m) scores.push_back(rng.u01() * 10.0);
    std::vector<double> mapped;
    for (double s : scores) mapped.push_back(std::exp(0.3 * s) + s * s * s);
    CHECK(choose_best(scores) == choose_best(mapped));
  }
}

TEST_CASE("select_model picks the smallest calibrated score") {
  const int w = 8, n = 2;
  std::vector<ForecasterHandle> pool = {constant_model("a", 1.0, w, n),
                                        constant_model("b", 2.0, w, n),
                                        constant_model("c", 3.0, w, n)};
  // Zero-sigma models: the scores reduce to the per-model offsets b.
  CalibrationMap map;
  map.entries["a"] = {0.0, 0.5, 0.0, true, 0.0};
  map.entries["b"] = {0.0, 0.2, 0.0, true, 0.0};
  map.entries["c"] = {0.0, 0.9, 0.0, true, 0.0};
  const auto [rec, pred] = select_model(pool, map, flat_window(w, n, 5.0), 10, 99);
  CHECK(rec.chosen_model == "b");
  CHECK(rec.scores.size() == 3);
  CHECK(rec.scores[1] == doctest::Approx(0.2));
  CHECK(pred.model_id == "b");
  CHECK(pred.mu_hat[1] == doctest::Approx(2.0));
}

TEST_CASE("select_model breaks ties by registration order") {
  const int w = 8, n = 2;
  std::vector<ForecasterHandle> pool = {constant_model("later", 1.0, w, n),
                                        constant_model("earlier", 2.0, w, n)};
  CalibrationMap map;
  map.entries["later"] = {0.0, 0.4, 0.0, true, 0.0};
  map.entries["earlier"] = {0.0, 0.4, 0.0, true, 0.0};
  const auto [rec, pred] = select_model(pool, map, flat_window(w, n, 5.0), 10, 1);
  CHECK(rec.chosen_model == "later");  // first registered wins the tie
}

TEST_CASE("empty pool is rejected") {
  CalibrationMap map;
  CHECK_THROWS_AS(select_model({}, map, flat_window(8, 2, 1.0), 10, 1), Error);
  CHECK_THROWS_AS(ensemble_predict({}, flat_window(8, 2, 1.0)), Error);
}

TEST_CASE("ensemble of identical models equals the single prediction") {
  const int w = 8, n = 2;
  std::vector<ForecasterHandle> pool = {constant_model("a", 4.0, w, n),
                                        constant_model("b", 4.0, w, n)};
  const DemandMatrix dm = ensemble_predict(pool, flat_window(w, n, 1.0));
  CHECK(dm.at(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("ensemble averages elementwise") {
  const int w = 8, n = 2;
  std::vector<ForecasterHandle> pool = {constant_model("a", 2.0, w, n),
                                        constant_model("b", 4.0, w, n)};
  const DemandMatrix dm = ensemble_predict(pool, flat_window(w, n, 1.0));
  CHECK(dm.at(0, 1) == doctest::Approx(3.0));
}

TEST_CASE("ensemble MAE can exceed the best single model") {
  // Two anti-specialized constant models on a two-regime truth: each is
  // perfect in one regime, their average is wrong everywhere.
  const int w = 8, n = 2;
  const ForecasterHandle low = constant_model("low", 1.0, w, n);
  const ForecasterHandle high = constant_model("high", 9.0, w, n);
  // Asymmetric regimes: the low model is right 4 of 6 times.
  const std::vector<double> truth = {1.0, 1.0, 1.0, 1.0, 9.0, 9.0};

  auto model_mae = [&](const ForecasterHandle& f) {
    double s = 0.0;
    for (double y : truth)
      s += std::abs(predict(f, flat_window(w, n, y)).at(0, 1) - y);
    return s / truth.size();
  };
  double ens = 0.0;
  for (double y : truth)
    ens += std::abs(ensemble_predict({low, high}, flat_window(w, n, y)).at(0, 1) - y);
  ens /= truth.size();
  CHECK(ens > std::min(model_mae(low), model_mae(high)));
}

TEST_CASE("correlation_report tracks constructed dependence") {
  Rng rng(31);
  std::vector<WindowStat> dependent, independent;
  for (int k = 0; k < 1000; ++k) {
    const double err = rng.u01() * 10.0;
    WindowStat d;
    d.mae = err;
    d.mean_sigma = err + 0.3 * rng.normal();  // sigma tracks |error|
    d.mean_sigma_cal = 2.0 * d.mean_sigma + 0.1;
    dependent.push_back(d);

    WindowStat ind;
    ind.mae = rng.u01() * 10.0;
    ind.mean_sigma = rng.u01() * 10.0;
    ind.mean_sigma_cal = ind.mean_sigma;
    independent.push_back(ind);
  }
  const CorrelationEntry dep = correlation_report("dep", dependent);
  REQUIRE(dep.r_raw.has_value());
  CHECK(*dep.r_raw > 0.9);
  // Positive-affine calibration preserves Pearson r exactly.
  CHECK(*dep.r_cal == doctest::Approx(*dep.r_raw).epsilon(1e-9));

  const CorrelationEntry ind = correlation_report("ind", independent);
  REQUIRE(ind.r_raw.has_value());
  CHECK(std::abs(*ind.r_raw) < 0.1);
}

TEST_CASE("zero-variance series reports undefined correlation") {
  std::vector<WindowStat> stats(40);
  for (int k = 0; k < 40; ++k) {
    stats[k].mae = 1.0;  // constant: no variance
    stats[k].mean_sigma = 0.1 * k;
    stats[k].mean_sigma_cal = 0.1 * k;
  }
  const CorrelationEntry e = correlation_report("const", stats);
  CHECK(!e.r_raw.has_value());
  CHECK_THROWS_AS(correlation_report("short", std::vector<WindowStat>(10)), Error);
}

TEST_CASE("calibration map persistence round trips") {
  CalibrationMap map;
  map.entries["x"] = {1.5, 0.25, -0.5, false, 123.0};
  map.entries["y"] = {0.0, 2.0, 0.0, true, 9.0};
  const std::string path = "test_selection_cal.json";
  save_calibration(map, path);
  const CalibrationMap back = load_calibration(path);
  CHECK(back.entries.at("x").a == 1.5);
  CHECK(back.entries.at("x").c == -0.5);
  CHECK(back.entries.at("y").degenerate);
  std::remove(path.c_str());
}

TEST_CASE("select_model replays identically under the same seed") {
  const int w = 8, n = 2;
  // Dropout-bearing crafted model so MC passes are genuinely stochastic.
  ForecasterHandle noisy = constant_model("noisy", 5.0, w, n);
  noisy.dropout_rate = 0.3;
  for (int k = 0; k < w; ++k) noisy.parameters[k] = 0.2;
  std::vector<ForecasterHandle> pool = {noisy, constant_model("flat", 5.0, w, n)};
  CalibrationMap map;
  map.entries["noisy"] = {1.0, 0.01, 0.0, false, 0.0};
  map.entries["flat"] = {0.0, 0.3, 0.0, true, 0.0};

  const auto [r1, p1] = select_model(pool, map, flat_window(w, n, 3.0), 25, 42);
  const auto [r2, p2] = select_model(pool, map, flat_window(w, n, 3.0), 25, 42);
  CHECK(r1.scores == r2.scores);
  CHECK(r1.chosen_model == r2.chosen_model);
  CHECK(p1.mu_hat == p2.mu_hat);
}

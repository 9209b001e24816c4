#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "tubo/preprocess.hpp"
#include "tubo/synth.hpp"

using namespace tubo;

namespace {

SynthSpec base_spec() {
  SynthSpec s;
  s.node_count = 6;
  s.epochs = 800;
  s.period = 80;
  s.mean_total_mbps = 600.0;
  s.spatial_variance = 16.0;
  s.temporal_variance = 8000.0;
  s.noise_scale = 0.0;
  s.seed = 42;
  return s;
}

double total_at(const DmSeries& s, int t) {
  double sum = 0.0;
  for (int i = 0; i < s.nodes(); ++i)
    for (int j = 0; j < s.nodes(); ++j)
      if (i != j && s.present(t, i, j)) sum += s.value(t, i, j);
  return sum;
}

}  // namespace

TEST_CASE("zero-noise temporal variance matches the closed form within 1%") {
  SynthSpec spec = base_spec();
  spec.epochs = 10 * spec.period;
  const SynthResult r = generate(spec);
  double mean = 0.0;
  for (int t = 0; t < spec.epochs; ++t) mean += total_at(r.series, t);
  mean /= spec.epochs;
  double var = 0.0;
  for (int t = 0; t < spec.epochs; ++t) {
    const double d = total_at(r.series, t) - mean;
    var += d * d;
  }
  var /= spec.epochs;
  CHECK(var == doctest::Approx(spec.temporal_variance).epsilon(0.01));
  CHECK(mean == doctest::Approx(spec.mean_total_mbps).epsilon(0.02));
}

TEST_CASE("spatial variance of the time-mean matrix matches the target") {
  const SynthSpec spec = base_spec();
  const SynthResult r = generate(spec);
  const int n = spec.node_count;
  std::vector<double> mean_cell(size_t(n) * n, 0.0);
  for (int t = 0; t < spec.epochs; ++t)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        mean_cell[size_t(i) * n + j] += r.series.value(t, i, j) / spec.epochs;
  double mu = 0.0;
  const int offdiag = n * n - n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) mu += mean_cell[size_t(i) * n + j];
  mu /= offdiag;
  double var = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        const double d = mean_cell[size_t(i) * n + j] - mu;
        var += d * d;
      }
  var /= offdiag;
  CHECK(var == doctest::Approx(spec.spatial_variance).epsilon(0.05));
}

TEST_CASE("no burst plan means an all-zero ground truth") {
  const SynthResult r = generate(base_spec());
  CHECK(r.ground_truth.count() == 0);
}

TEST_CASE("planted burst with multiplier 10 is detected exactly there") {
  SynthSpec spec = base_spec();
  spec.bursts.push_back({200, 1, 2, 10.0});
  const SynthResult r = generate(spec);
  CHECK(r.ground_truth.count() == 1);
  CHECK(r.ground_truth.burst(200, 1, 2));
  const Window win = window_at(r.series, 200, 12);
  CHECK(detect_bursts(win, 1, 2).burst);
  CHECK(!detect_bursts(win, 2, 1).burst);
}

TEST_CASE("identical specs generate bit-identical series") {
  SynthSpec spec = base_spec();
  spec.noise_scale = 5.0;
  spec.missing_fraction = 0.05;
  const SynthResult a = generate(spec);
  const SynthResult b = generate(spec);
  REQUIRE(a.series.epochs() == b.series.epochs());
  for (int t = 0; t < a.series.epochs(); ++t)
    for (int i = 0; i < a.series.nodes(); ++i)
      for (int j = 0; j < a.series.nodes(); ++j) {
        REQUIRE(a.series.present(t, i, j) == b.series.present(t, i, j));
        if (a.series.present(t, i, j))
          REQUIRE(a.series.value(t, i, j) == b.series.value(t, i, j));
      }
  SynthSpec other = spec;
  other.seed = 43;
  const SynthResult c = generate(other);
  bool any_diff = false;
  for (int t = 0; t < a.series.epochs() && !any_diff; ++t)
    if (a.series.present(t, 0, 1) != c.series.present(t, 0, 1) ||
        (a.series.present(t, 0, 1) &&
         a.series.value(t, 0, 1) != c.series.value(t, 0, 1)))
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("generated demands are nonnegative even with heavy noise") {
  SynthSpec spec = base_spec();
  spec.noise_scale = 80.0;
  spec.temporal_variance = 80.0 * 80.0 + 100.0;
  const SynthResult r = generate(spec);
  for (int t = 0; t < spec.epochs; ++t)
    for (int i = 0; i < spec.node_count; ++i)
      for (int j = 0; j < spec.node_count; ++j)
        if (r.series.present(t, i, j)) CHECK(r.series.value(t, i, j) >= 0.0);
}

TEST_CASE("unsatisfiable targets are rejected naming the constraint") {
  SynthSpec alpha = base_spec();
  alpha.temporal_variance = alpha.mean_total_mbps * alpha.mean_total_mbps;  // alpha > 1
  CHECK_THROWS_WITH_AS(generate(alpha), doctest::Contains("alpha"), Error);

  SynthSpec below_noise = base_spec();
  below_noise.noise_scale = 200.0;
  below_noise.temporal_variance = 100.0;  // < noise^2
  CHECK_THROWS_AS(generate(below_noise), Error);

  SynthSpec spatial = base_spec();
  spatial.spatial_variance = 1e9;  // would need negative base entries
  CHECK_THROWS_WITH_AS(generate(spatial), doctest::Contains("spatial"), Error);
}

TEST_CASE("undetectable planted bursts are rejected at generation time") {
  SynthSpec spec = base_spec();
  spec.bursts.push_back({200, 1, 2, 1.05});  // too small to trip 2.576 sigma
  CHECK_THROWS_AS(generate(spec), Error);

  SynthSpec early = base_spec();
  early.bursts.push_back({3, 1, 2, 10.0});  // before the first classifiable epoch
  CHECK_THROWS_AS(generate(early), Error);
}

TEST_CASE("periodic burst plan expands across the series") {
  SynthSpec spec = base_spec();
  PeriodicBurstPlan plan;
  plan.start_epoch = 100;
  plan.period = 50;
  plan.pairs = {{0, 1}};
  plan.multiplier = 12.0;
  spec.periodic_bursts = plan;
  const SynthResult r = generate(spec);
  CHECK(r.ground_truth.count() == size_t((spec.epochs - 100 + 49) / 50));
  CHECK(r.ground_truth.burst(100, 0, 1));
  CHECK(r.ground_truth.burst(150, 0, 1));
}

TEST_CASE("mixed_regime concatenates and reports boundaries") {
  SynthSpec a = base_spec();
  a.epochs = 300;
  a.period = 60;
  SynthSpec b = a;
  b.seed = 77;
  SynthSpec c = a;
  c.seed = 78;
  const MixedRegimeResult r = mixed_regime({a, b, c});
  CHECK(r.series.epochs() == 900);
  CHECK(r.boundaries == std::vector<int>{300, 600, 900});

  SynthSpec other_n = a;
  other_n.node_count = 4;
  CHECK_THROWS_AS(mixed_regime({a, other_n}), Error);
}

TEST_CASE("two identical specs make a statistically homogeneous series") {
  SynthSpec a = base_spec();
  a.epochs = 400;
  a.period = 80;
  const MixedRegimeResult r = mixed_regime({a, a});
  double m1 = 0.0, m2 = 0.0;
  for (int t = 0; t < 400; ++t) m1 += total_at(r.series, t);
  for (int t = 400; t < 800; ++t) m2 += total_at(r.series, t);
  CHECK(m1 / 400.0 == doctest::Approx(m2 / 400.0).epsilon(1e-9));
}

TEST_CASE("spec file round trip") {
  SynthSpec spec = base_spec();
  spec.bursts.push_back({150, 0, 3, 11.0});
  PeriodicBurstPlan plan;
  plan.start_epoch = 90;
  plan.period = 45;
  plan.pairs = {{1, 2}, {3, 4}};
  plan.multiplier = 9.0;
  spec.periodic_bursts = plan;
  const std::string path = "test_synth_spec.json";
  save_synth_spec(spec, path);
  const SynthSpec back = load_synth_spec(path);
  CHECK(back.node_count == spec.node_count);
  CHECK(back.temporal_variance == spec.temporal_variance);
  REQUIRE(back.bursts.size() == 1);
  CHECK(back.bursts[0].epoch == 150);
  REQUIRE(back.periodic_bursts.has_value());
  CHECK(back.periodic_bursts->pairs.size() == 2);
  std::remove(path.c_str());
}

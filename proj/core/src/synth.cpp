#include "tubo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tubo/rng.hpp"

namespace tubo {

namespace {

std::vector<BurstPlanEntry> expand_plan(const SynthSpec& spec) {
  std::vector<BurstPlanEntry> plan = spec.bursts;
  if (spec.periodic_bursts) {
    const PeriodicBurstPlan& p = *spec.periodic_bursts;
    if (p.period < 1) throw Error("synth: periodic burst plan needs period >= 1");
    for (int e = p.start_epoch; e < spec.epochs; e += p.period)
      for (const auto& [i, j] : p.pairs)
        plan.push_back({e, i, j, p.multiplier});
  }
  for (const BurstPlanEntry& b : plan) {
    if (b.epoch < 0 || b.epoch >= spec.epochs)
      throw Error("synth: planted burst epoch " + std::to_string(b.epoch) +
                  " out of range");
    if (b.src < 0 || b.src >= spec.node_count || b.dst < 0 ||
        b.dst >= spec.node_count || b.src == b.dst)
      throw Error("synth: planted burst OD pair out of range");
    if (b.multiplier <= 1.0)
      throw Error("synth: burst multiplier must exceed 1");
    if (b.epoch < spec.detect_window - 1)
      throw Error("synth: planted burst at epoch " + std::to_string(b.epoch) +
                  " is before the first classifiable epoch w-1");
  }
  return plan;
}

}  // namespace

SynthResult generate(const SynthSpec& spec) {
  if (spec.node_count < 2) throw Error("synth: need at least 2 nodes");
  if (spec.period < 2) throw Error("synth: period must be >= 2");
  if (spec.epochs < 2 * spec.period)
    throw Error("synth: need at least 2 periods of epochs (T >= 2P)");
  if (spec.mean_total_mbps <= 0.0) throw Error("synth: mean total must be positive");
  if (spec.temporal_variance < 0.0 || spec.spatial_variance < 0.0)
    throw Error("synth: variance targets must be nonnegative");
  if (spec.noise_scale < 0.0) throw Error("synth: noise scale must be nonnegative");
  if (spec.missing_fraction < 0.0 || spec.missing_fraction >= 1.0)
    throw Error("synth: missing fraction must be in [0, 1)");
  if (spec.detect_window < kMinBurstWindow)
    throw Error("synth: detect_window must be >= " + std::to_string(kMinBurstWindow));

  const int n = spec.node_count;
  const int cells = n * n;

  // Gravity base: exponential weights, normalized to unit total so the
  // modulation signal *is* the total traffic.
  Rng weight_rng(derive_seed(spec.seed, "weights"));
  std::vector<double> g(n);
  for (double& v : g) v = weight_rng.exponential(1.0);
  std::vector<double> base(cells, 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        base[size_t(i) * n + j] = g[i] * g[j];
        total += base[size_t(i) * n + j];
      }
  for (double& v : base) v /= total;

  // Shape scaling to the spatial variance target: the time-mean entry is
  // mean_total * base[c], so std(base) must equal sqrt(target) / mean_total.
  const int offdiag = cells - n;
  const double bbar = 1.0 / offdiag;
  double ss = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        const double d = base[size_t(i) * n + j] - bbar;
        ss += d * d;
      }
  const double base_std = std::sqrt(ss / offdiag);
  const double want_std = std::sqrt(spec.spatial_variance) / spec.mean_total_mbps;
  double gamma = 1.0;
  if (want_std == 0.0) {
    gamma = 0.0;
  } else if (base_std <= 1e-15) {
    throw Error("synth: spatial variance target unsatisfiable, gravity base is uniform");
  } else {
    gamma = want_std / base_std;
  }
  double min_entry = 1.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        const size_t c = size_t(i) * n + j;
        base[c] = bbar + gamma * (base[c] - bbar);
        min_entry = std::min(min_entry, base[c]);
      }
  if (min_entry < 0.0)
    throw Error("synth: spatial variance target unsatisfiable, implied negative base entry");

  // Temporal calibration: Var(M) = alpha^2 * mean^2 / 2 + noise^2.
  const double noise_var = spec.noise_scale * spec.noise_scale;
  if (spec.temporal_variance < noise_var - 1e-12)
    throw Error("synth: temporal variance target below the noise power n^2");
  const double alpha =
      std::sqrt(2.0 * std::max(0.0, spec.temporal_variance - noise_var)) /
      spec.mean_total_mbps;
  if (alpha > 1.0)
    throw Error("synth: temporal variance target unsatisfiable, implied alpha = " +
                std::to_string(alpha) + " > 1");

  const std::vector<BurstPlanEntry> plan = expand_plan(spec);

  Rng noise_rng(derive_seed(spec.seed, "noise"));
  Rng missing_rng(derive_seed(spec.seed, "missing"));

  DmSeries series(n, spec.granularity_minutes);
  BurstSeries truth(spec.epochs, n);
  std::vector<double> row(cells);
  std::vector<uint8_t> mask(cells);

  std::vector<std::vector<const BurstPlanEntry*>> per_epoch(spec.epochs);
  for (const BurstPlanEntry& b : plan) per_epoch[b.epoch].push_back(&b);

  for (int t = 0; t < spec.epochs; ++t) {
    double m = spec.mean_total_mbps *
                   (1.0 + alpha * std::sin(2.0 * M_PI * t / spec.period)) +
               spec.noise_scale * noise_rng.normal();
    m = std::max(m, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const size_t c = size_t(i) * n + j;
        row[c] = i == j ? 0.0 : m * base[c];
        mask[c] = 1;
        if (i != j && spec.missing_fraction > 0.0 &&
            missing_rng.u01() < spec.missing_fraction) {
          mask[c] = 0;
          row[c] = 0.0;
        }
      }
    for (const BurstPlanEntry* b : per_epoch[t]) {
      const size_t c = size_t(b->src) * n + b->dst;
      mask[c] = 1;  // planted bursts are always observed, even if drawn missing
      row[c] = std::max(m * base[c], 1e-9) * b->multiplier;
      truth.set(t, b->src, b->dst, true);
    }
    series.push_epoch(row, mask);
  }

  // Every planted burst must actually trip the detector at detect_window.
  for (const BurstPlanEntry& b : plan) {
    const Window win = window_at(series, b.epoch, spec.detect_window);
    if (!detect_bursts(win, b.src, b.dst).burst)
      throw Error("synth: planted burst at epoch " + std::to_string(b.epoch) +
                  " od (" + std::to_string(b.src) + "," + std::to_string(b.dst) +
                  ") is not detectable at w=" + std::to_string(spec.detect_window) +
                  "; increase the multiplier");
  }

  return {std::move(series), std::move(truth)};
}

MixedRegimeResult mixed_regime(const std::vector<SynthSpec>& specs) {
  if (specs.empty()) throw Error("mixed_regime: no specs");
  const int n = specs.front().node_count;
  for (const SynthSpec& s : specs)
    if (s.node_count != n)
      throw Error("mixed_regime: all specs must share the node count");

  MixedRegimeResult out;
  out.series = DmSeries(n, specs.front().granularity_minutes);
  int total = 0;
  for (const SynthSpec& s : specs) total += s.epochs;
  out.ground_truth = BurstSeries(total, n);

  const int cells = n * n;
  std::vector<double> row(cells);
  std::vector<uint8_t> mask(cells);
  int offset = 0;
  for (const SynthSpec& s : specs) {
    SynthResult r = generate(s);
    for (int t = 0; t < r.series.epochs(); ++t) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const size_t c = size_t(i) * n + j;
          mask[c] = r.series.present(t, i, j) ? 1 : 0;
          row[c] = mask[c] ? r.series.value(t, i, j) : 0.0;
          if (r.ground_truth.burst(t, i, j))
            out.ground_truth.set(offset + t, i, j, true);
        }
      out.series.push_epoch(row, mask);
    }
    offset += r.series.epochs();
    out.boundaries.push_back(offset);
  }
  return out;
}

namespace {

nlohmann::json spec_to_json(const SynthSpec& s) {
  nlohmann::json j;
  j["node_count"] = s.node_count;
  j["epochs"] = s.epochs;
  j["granularity_minutes"] = s.granularity_minutes;
  j["mean_total_mbps"] = s.mean_total_mbps;
  j["spatial_variance"] = s.spatial_variance;
  j["temporal_variance"] = s.temporal_variance;
  j["period"] = s.period;
  j["noise_scale"] = s.noise_scale;
  j["missing_fraction"] = s.missing_fraction;
  j["detect_window"] = s.detect_window;
  j["seed"] = s.seed;
  j["bursts"] = nlohmann::json::array();
  for (const BurstPlanEntry& b : s.bursts)
    j["bursts"].push_back({{"epoch", b.epoch},
                           {"src", b.src},
                           {"dst", b.dst},
                           {"multiplier", b.multiplier}});
  if (s.periodic_bursts) {
    const PeriodicBurstPlan& p = *s.periodic_bursts;
    nlohmann::json pj;
    pj["start_epoch"] = p.start_epoch;
    pj["period"] = p.period;
    pj["multiplier"] = p.multiplier;
    pj["pairs"] = nlohmann::json::array();
    for (const auto& [i, jj] : p.pairs) pj["pairs"].push_back({i, jj});
    j["periodic_bursts"] = pj;
  }
  return j;
}

SynthSpec spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.node_count = j.at("node_count").get<int>();
  s.epochs = j.at("epochs").get<int>();
  s.granularity_minutes = j.value("granularity_minutes", 5);
  s.mean_total_mbps = j.at("mean_total_mbps").get<double>();
  s.spatial_variance = j.at("spatial_variance").get<double>();
  s.temporal_variance = j.at("temporal_variance").get<double>();
  s.period = j.at("period").get<int>();
  s.noise_scale = j.value("noise_scale", 0.0);
  s.missing_fraction = j.value("missing_fraction", 0.0);
  s.detect_window = j.value("detect_window", 12);
  s.seed = j.value("seed", uint64_t(1));
  if (j.contains("bursts"))
    for (const auto& bj : j.at("bursts"))
      s.bursts.push_back({bj.at("epoch").get<int>(), bj.at("src").get<int>(),
                          bj.at("dst").get<int>(), bj.at("multiplier").get<double>()});
  if (j.contains("periodic_bursts")) {
    PeriodicBurstPlan p;
    const auto& pj = j.at("periodic_bursts");
    p.start_epoch = pj.at("start_epoch").get<int>();
    p.period = pj.at("period").get<int>();
    p.multiplier = pj.at("multiplier").get<double>();
    for (const auto& pr : pj.at("pairs"))
      p.pairs.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
    s.periodic_bursts = p;
  }
  return s;
}

}  // namespace

SynthSpec load_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_synth_spec: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
    return spec_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_synth_spec: " + path + ": " + e.what());
  }
}

void save_synth_spec(const SynthSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_synth_spec: cannot open " + path);
  out << spec_to_json(spec).dump(2) << "\n";
}

void save_ground_truth(const BurstSeries& truth, const std::vector<int>& boundaries,
                       const std::string& path) {
  nlohmann::json j;
  j["format"] = "tubo-ground-truth-v1";
  j["epochs"] = truth.epochs();
  j["nodes"] = truth.nodes();
  j["boundaries"] = boundaries;
  nlohmann::json bursts = nlohmann::json::array();
  for (int t = 0; t < truth.epochs(); ++t)
    for (int i = 0; i < truth.nodes(); ++i)
      for (int j2 = 0; j2 < truth.nodes(); ++j2)
        if (truth.burst(t, i, j2)) bursts.push_back({t, i, j2});
  j["bursts"] = bursts;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_ground_truth: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace tubo

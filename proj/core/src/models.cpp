#include "tubo/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "tubo/rng.hpp"

namespace tubo {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::SeasonalNaive: return "seasonal-naive";
    case ModelKind::LinearAr: return "linear-ar";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Recurrent: return "recurrent";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "seasonal-naive") return ModelKind::SeasonalNaive;
  if (s == "linear-ar") return ModelKind::LinearAr;
  if (s == "mlp") return ModelKind::Mlp;
  if (s == "recurrent") return ModelKind::Recurrent;
  throw Error("unknown model kind: " + s);
}

namespace {

struct Dims {
  int w = 0;      // window length
  int n = 0;      // nodes
  int cells = 0;  // n*n, model output width
  int d = 0;      // flattened input width, w*cells
  int hidden = 0;
};

Dims dims_of(const ForecasterHandle& f) {
  Dims d;
  d.w = f.window;
  d.n = f.nodes;
  d.cells = f.nodes * f.nodes;
  d.d = d.w * d.cells;
  d.hidden = f.hidden;
  return d;
}

size_t param_count(ModelKind kind, const Dims& d) {
  switch (kind) {
    case ModelKind::SeasonalNaive:
      return 0;
    case ModelKind::LinearAr:
      return size_t(d.w) + 1;
    case ModelKind::Mlp:
      return size_t(d.hidden) * d.d + d.hidden + size_t(d.cells) * d.hidden + d.cells;
    case ModelKind::Recurrent:
      return size_t(d.hidden) * d.cells + size_t(d.hidden) * d.hidden + d.hidden +
             size_t(d.cells) * d.hidden + d.cells;
  }
  return 0;
}

// Inverted-dropout keep mask. Layout depends on the model: input elements for
// linear-ar, hidden units for mlp, readout hidden units for recurrent.
struct DropoutPlan {
  double rate = 0.0;
  std::vector<uint8_t> keep;
};

size_t dropout_width(ModelKind kind, const Dims& d) {
  switch (kind) {
    case ModelKind::SeasonalNaive: return 0;
    case ModelKind::LinearAr: return size_t(d.d);
    case ModelKind::Mlp: return size_t(d.hidden);
    case ModelKind::Recurrent: return size_t(d.hidden);
  }
  return 0;
}

DropoutPlan draw_plan(ModelKind kind, const Dims& d, double rate, Rng& rng) {
  DropoutPlan plan;
  plan.rate = rate;
  plan.keep.resize(dropout_width(kind, d));
  for (auto& k : plan.keep) k = rng.u01() >= rate ? 1 : 0;
  return plan;
}

// Forward-pass scratch, reused by backward.
struct Workspace {
  std::vector<double> xeff;  // linear-ar: inputs after dropout
  std::vector<double> h;     // mlp: hidden activations (pre-dropout)
  std::vector<double> heff;  // mlp / recurrent: hidden after dropout
  std::vector<double> hs;    // recurrent: (w+1) * hidden states, hs[0] = 0
};

void forward(const ForecasterHandle& f, const Dims& d, const double* input,
             const DropoutPlan* plan, Workspace& ws, std::vector<double>& out) {
  const std::vector<double>& p = f.parameters;
  out.assign(d.cells, 0.0);
  const double inv_keep = plan ? 1.0 / (1.0 - plan->rate) : 1.0;

  switch (f.kind) {
    case ModelKind::SeasonalNaive: {
      const int k = d.w - f.period;
      for (int c = 0; c < d.cells; ++c) out[c] = input[size_t(k) * d.cells + c];
      return;
    }
    case ModelKind::LinearAr: {
      ws.xeff.assign(input, input + d.d);
      if (plan)
        for (int e = 0; e < d.d; ++e)
          ws.xeff[e] = plan->keep[e] ? ws.xeff[e] * inv_keep : 0.0;
      const double bias = p[d.w];
      for (int c = 0; c < d.cells; ++c) {
        double acc = bias;
        for (int k = 0; k < d.w; ++k) acc += p[k] * ws.xeff[size_t(k) * d.cells + c];
        out[c] = acc;
      }
      return;
    }
    case ModelKind::Mlp: {
      const int H = d.hidden;
      const double* w1 = p.data();
      const double* b1 = w1 + size_t(H) * d.d;
      const double* w2 = b1 + H;
      const double* b2 = w2 + size_t(d.cells) * H;
      ws.h.assign(H, 0.0);
      for (int u = 0; u < H; ++u) {
        double acc = b1[u];
        const double* row = w1 + size_t(u) * d.d;
        for (int e = 0; e < d.d; ++e) acc += row[e] * input[e];
        ws.h[u] = std::tanh(acc);
      }
      ws.heff = ws.h;
      if (plan)
        for (int u = 0; u < H; ++u)
          ws.heff[u] = plan->keep[u] ? ws.heff[u] * inv_keep : 0.0;
      for (int c = 0; c < d.cells; ++c) {
        double acc = b2[c];
        const double* row = w2 + size_t(c) * H;
        for (int u = 0; u < H; ++u) acc += row[u] * ws.heff[u];
        out[c] = acc;
      }
      return;
    }
    case ModelKind::Recurrent: {
      const int H = d.hidden;
      const double* wx = p.data();
      const double* wh = wx + size_t(H) * d.cells;
      const double* bh = wh + size_t(H) * H;
      const double* wo = bh + H;
      const double* bo = wo + size_t(d.cells) * H;
      ws.hs.assign(size_t(d.w + 1) * H, 0.0);
      for (int t = 0; t < d.w; ++t) {
        const double* xt = input + size_t(t) * d.cells;
        const double* hprev = ws.hs.data() + size_t(t) * H;
        double* ht = ws.hs.data() + size_t(t + 1) * H;
        for (int u = 0; u < H; ++u) {
          double acc = bh[u];
          const double* xrow = wx + size_t(u) * d.cells;
          for (int e = 0; e < d.cells; ++e) acc += xrow[e] * xt[e];
          const double* hrow = wh + size_t(u) * H;
          for (int v = 0; v < H; ++v) acc += hrow[v] * hprev[v];
          ht[u] = std::tanh(acc);
        }
      }
      const double* hlast = ws.hs.data() + size_t(d.w) * H;
      ws.heff.assign(hlast, hlast + H);
      if (plan)
        for (int u = 0; u < H; ++u)
          ws.heff[u] = plan->keep[u] ? ws.heff[u] * inv_keep : 0.0;
      for (int c = 0; c < d.cells; ++c) {
        double acc = bo[c];
        const double* row = wo + size_t(c) * H;
        for (int u = 0; u < H; ++u) acc += row[u] * ws.heff[u];
        out[c] = acc;
      }
      return;
    }
  }
}

// Accumulates d(loss)/d(params) into grad given d(loss)/d(out).
void backward(const ForecasterHandle& f, const Dims& d, const double* input,
              const DropoutPlan* plan, const Workspace& ws,
              const std::vector<double>& dout, std::vector<double>& grad) {
  const std::vector<double>& p = f.parameters;
  const double inv_keep = plan ? 1.0 / (1.0 - plan->rate) : 1.0;

  switch (f.kind) {
    case ModelKind::SeasonalNaive:
      return;
    case ModelKind::LinearAr: {
      double dbias = 0.0;
      for (int c = 0; c < d.cells; ++c) dbias += dout[c];
      grad[d.w] += dbias;
      for (int k = 0; k < d.w; ++k) {
        double acc = 0.0;
        const double* xk = ws.xeff.data() + size_t(k) * d.cells;
        for (int c = 0; c < d.cells; ++c) acc += dout[c] * xk[c];
        grad[k] += acc;
      }
      return;
    }
    case ModelKind::Mlp: {
      const int H = d.hidden;
      const double* w2 = p.data() + size_t(H) * d.d + H;
      double* gw1 = grad.data();
      double* gb1 = gw1 + size_t(H) * d.d;
      double* gw2 = gb1 + H;
      double* gb2 = gw2 + size_t(d.cells) * H;

      std::vector<double> dheff(H, 0.0);
      for (int c = 0; c < d.cells; ++c) {
        gb2[c] += dout[c];
        double* grow = gw2 + size_t(c) * H;
        const double* w2row = w2 + size_t(c) * H;
        for (int u = 0; u < H; ++u) {
          grow[u] += dout[c] * ws.heff[u];
          dheff[u] += w2row[u] * dout[c];
        }
      }
      for (int u = 0; u < H; ++u) {
        double dh = dheff[u];
        if (plan) dh = plan->keep[u] ? dh * inv_keep : 0.0;
        const double du = dh * (1.0 - ws.h[u] * ws.h[u]);
        gb1[u] += du;
        double* grow = gw1 + size_t(u) * d.d;
        for (int e = 0; e < d.d; ++e) grow[e] += du * input[e];
      }
      return;
    }
    case ModelKind::Recurrent: {
      const int H = d.hidden;
      const double* wh = p.data() + size_t(H) * d.cells;
      const double* wo = p.data() + size_t(H) * d.cells + size_t(H) * H + H;
      double* gwx = grad.data();
      double* gwh = gwx + size_t(H) * d.cells;
      double* gbh = gwh + size_t(H) * H;
      double* gwo = gbh + H;
      double* gbo = gwo + size_t(d.cells) * H;

      std::vector<double> dh(H, 0.0);
      for (int c = 0; c < d.cells; ++c) {
        gbo[c] += dout[c];
        double* grow = gwo + size_t(c) * H;
        const double* worow = wo + size_t(c) * H;
        for (int u = 0; u < H; ++u) {
          grow[u] += dout[c] * ws.heff[u];
          dh[u] += worow[u] * dout[c];
        }
      }
      if (plan)
        for (int u = 0; u < H; ++u) dh[u] = plan->keep[u] ? dh[u] * inv_keep : 0.0;

      std::vector<double> du(H), dhprev(H);
      for (int t = d.w - 1; t >= 0; --t) {
        const double* ht = ws.hs.data() + size_t(t + 1) * H;
        const double* hprev = ws.hs.data() + size_t(t) * H;
        const double* xt = input + size_t(t) * d.cells;
        for (int u = 0; u < H; ++u) du[u] = dh[u] * (1.0 - ht[u] * ht[u]);
        std::fill(dhprev.begin(), dhprev.end(), 0.0);
        for (int u = 0; u < H; ++u) {
          gbh[u] += du[u];
          double* gxrow = gwx + size_t(u) * d.cells;
          for (int e = 0; e < d.cells; ++e) gxrow[e] += du[u] * xt[e];
          double* ghrow = gwh + size_t(u) * H;
          const double* whrow = wh + size_t(u) * H;
          for (int v = 0; v < H; ++v) {
            ghrow[v] += du[u] * hprev[v];
            dhprev[v] += whrow[v] * du[u];
          }
        }
        dh = dhprev;
      }
      return;
    }
  }
}

void init_parameters(ForecasterHandle& f, const Dims& d) {
  Rng rng(derive_seed(f.seed, "init"));
  f.parameters.assign(param_count(f.kind, d), 0.0);
  auto uniform = [&rng](double c) { return (2.0 * rng.u01() - 1.0) * c; };
  switch (f.kind) {
    case ModelKind::SeasonalNaive:
      return;
    case ModelKind::LinearAr: {
      const double c = 1.0 / d.w;
      for (int k = 0; k < d.w; ++k) f.parameters[k] = uniform(c);
      f.parameters[d.w] = 0.0;
      return;
    }
    case ModelKind::Mlp: {
      const int H = d.hidden;
      const double c1 = 1.0 / std::sqrt(double(d.d));
      const double c2 = 1.0 / std::sqrt(double(H));
      size_t o = 0;
      for (size_t k = 0; k < size_t(H) * d.d; ++k) f.parameters[o++] = uniform(c1);
      o += H;  // b1 = 0
      for (size_t k = 0; k < size_t(d.cells) * H; ++k) f.parameters[o++] = uniform(c2);
      return;
    }
    case ModelKind::Recurrent: {
      const int H = d.hidden;
      const double cx = 1.0 / std::sqrt(double(d.cells));
      const double ch = 0.5 / std::sqrt(double(H));
      size_t o = 0;
      for (size_t k = 0; k < size_t(H) * d.cells; ++k) f.parameters[o++] = uniform(cx);
      for (size_t k = 0; k < size_t(H) * H; ++k) f.parameters[o++] = uniform(ch);
      o += H;  // bh = 0
      const double co = 1.0 / std::sqrt(double(H));
      for (size_t k = 0; k < size_t(d.cells) * H; ++k) f.parameters[o++] = uniform(co);
      return;
    }
  }
}

long long count_unmasked(const SampleSet& set, const std::vector<size_t>& indices) {
  long long c = 0;
  for (size_t s : indices)
    for (uint8_t m : set.samples[s].tmask) c += m;
  return c;
}

// Raw-space holdout MAE; the cross-scheme comparable accuracy figure.
double raw_val_mae(const ForecasterHandle& f, const SampleSet& set,
                   const std::vector<size_t>& indices) {
  const Dims d = dims_of(f);
  Workspace ws;
  std::vector<double> out;
  double abs_sum = 0.0;
  long long count = 0;
  for (size_t s : indices) {
    const Sample& sm = set.samples[s];
    forward(f, d, sm.input.data(), nullptr, ws, out);
    for (int c = 0; c < d.cells; ++c) {
      if (!sm.tmask[c]) continue;
      const double pred = std::max(0.0, out[c] * sm.tgt_sigma[c] + sm.tgt_mu[c]);
      const double truth = sm.target[c] * sm.tgt_sigma[c] + sm.tgt_mu[c];
      abs_sum += std::abs(pred - truth);
      ++count;
    }
  }
  return count > 0 ? abs_sum / double(count) : 0.0;
}

struct Adam {
  std::vector<double> m, v;
  long long step = 0;

  void update(std::vector<double>& params, const std::vector<double>& grad,
              const TrainConfig& cfg) {
    if (m.empty()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, double(step));
    const double bc2 = 1.0 - std::pow(b2, double(step));
    for (size_t k = 0; k < params.size(); ++k) {
      const double g = grad[k] + cfg.weight_decay * params[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      params[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + 1e-8);
    }
  }
};

// One Adam step over a minibatch, with per-sample dropout plans.
double train_step(ForecasterHandle& f, const Dims& d, const SampleSet& set,
                  const std::vector<size_t>& batch, const TrainConfig& cfg,
                  Adam& adam, Rng& dropout_rng) {
  const long long count = count_unmasked(set, batch);
  if (count == 0) return 0.0;
  std::vector<double> grad(f.parameters.size(), 0.0);
  std::vector<double> out, dout(d.cells);
  Workspace ws;
  double loss = 0.0;
  const bool use_dropout = f.dropout_rate > 0.0 && f.kind != ModelKind::SeasonalNaive;
  for (size_t s : batch) {
    const Sample& sm = set.samples[s];
    DropoutPlan plan;
    if (use_dropout) plan = draw_plan(f.kind, d, f.dropout_rate, dropout_rng);
    forward(f, d, sm.input.data(), use_dropout ? &plan : nullptr, ws, out);
    for (int c = 0; c < d.cells; ++c) {
      if (!sm.tmask[c]) {
        dout[c] = 0.0;
        continue;
      }
      const double r = out[c] - sm.target[c];
      loss += std::abs(r);
      dout[c] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / double(count);
    }
    backward(f, d, sm.input.data(), use_dropout ? &plan : nullptr, ws, dout, grad);
  }
  loss /= double(count);
  if (!std::isfinite(loss))
    throw Error("training diverged: non-finite loss for " + f.model_id);
  adam.update(f.parameters, grad, cfg);
  return loss;
}

std::vector<size_t> shuffled(std::vector<size_t> idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.bounded(uint32_t(i))]);
  return idx;
}

// Core Adam loop with best-checkpoint tracking and patience early stop.
// fixed_epochs > 0 disables both and trains exactly that many epochs.
void run_training(ForecasterHandle& f, const Dims& d, const SampleSet& set,
                  const std::vector<size_t>& train_idx,
                  const std::vector<size_t>& val_idx, const TrainConfig& cfg,
                  int fixed_epochs, std::vector<double>* val_curve) {
  Adam adam;
  std::vector<double> best_params = f.parameters;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const int epochs = fixed_epochs > 0 ? fixed_epochs : cfg.max_epochs;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(f.seed, "shuffle", uint64_t(epoch)));
    Rng dropout_rng(derive_seed(f.seed, "dropout", uint64_t(epoch)));
    const std::vector<size_t> order = shuffled(train_idx, shuffle_rng);
    for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const size_t e = std::min(order.size(), b + cfg.batch_size);
      std::vector<size_t> batch(order.begin() + b, order.begin() + e);
      train_step(f, d, set, batch, cfg, adam, dropout_rng);
    }
    if (!val_idx.empty()) {
      const double val = eval_loss(f, set, val_idx);
      if (!std::isfinite(val))
        throw Error("training diverged: non-finite validation loss for " + f.model_id);
      if (val_curve) val_curve->push_back(val);
      if (fixed_epochs <= 0) {
        if (val < best_val) {
          best_val = val;
          best_params = f.parameters;
          since_best = 0;
        } else if (++since_best >= cfg.patience) {
          break;
        }
      }
    }
  }
  if (fixed_epochs <= 0 && !val_idx.empty()) {
    f.parameters = std::move(best_params);
    f.best_val_loss = best_val;
  } else if (!val_idx.empty()) {
    f.best_val_loss = eval_loss(f, set, val_idx);
  }
}

}  // namespace

SampleSet build_samples(const NonBurstSeries& train, const NormalizationParams& norm,
                        int w) {
  const int t_total = train.epochs();
  const int n = train.nodes();
  if (t_total < w + 1)
    throw Error("build_samples: series too short for window " + std::to_string(w));
  SampleSet set;
  set.window = w;
  set.nodes = n;
  const int cells = n * n;
  for (int s = w - 1; s + 1 < t_total; ++s) {
    const NormalizedWindow nw = normalize_slice(train, s, w, norm);
    Sample sm;
    sm.input.assign(size_t(w) * cells, 0.0);
    for (int k = 0; k < w; ++k)
      for (int c = 0; c < cells; ++c) {
        const size_t e = size_t(k) * cells + c;
        sm.input[e] = nw.present[e] ? nw.values[e] : 0.0;
      }
    sm.target.assign(cells, 0.0);
    sm.tmask.assign(cells, 0);
    sm.tgt_mu = nw.mu;
    sm.tgt_sigma = nw.sigma;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        if (!train.usable(s + 1, i, j)) continue;
        const size_t c = size_t(i) * n + j;
        sm.target[c] = (train.value(s + 1, i, j) - nw.mu[c]) / nw.sigma[c];
        sm.tmask[c] = 1;
      }
    set.samples.push_back(std::move(sm));
  }
  return set;
}

double eval_loss(const ForecasterHandle& f, const SampleSet& set,
                 const std::vector<size_t>& indices) {
  const Dims d = dims_of(f);
  const long long count = count_unmasked(set, indices);
  if (count == 0) return 0.0;
  Workspace ws;
  std::vector<double> out;
  double loss = 0.0;
  for (size_t s : indices) {
    const Sample& sm = set.samples[s];
    forward(f, d, sm.input.data(), nullptr, ws, out);
    for (int c = 0; c < d.cells; ++c)
      if (sm.tmask[c]) loss += std::abs(out[c] - sm.target[c]);
  }
  return loss / double(count);
}

double loss_and_grad(const ForecasterHandle& f, const SampleSet& set,
                     const std::vector<size_t>& indices, std::vector<double>& grad) {
  const Dims d = dims_of(f);
  grad.assign(f.parameters.size(), 0.0);
  const long long count = count_unmasked(set, indices);
  if (count == 0) return 0.0;
  Workspace ws;
  std::vector<double> out, dout(d.cells);
  double loss = 0.0;
  for (size_t s : indices) {
    const Sample& sm = set.samples[s];
    forward(f, d, sm.input.data(), nullptr, ws, out);
    for (int c = 0; c < d.cells; ++c) {
      if (!sm.tmask[c]) {
        dout[c] = 0.0;
        continue;
      }
      const double r = out[c] - sm.target[c];
      loss += std::abs(r);
      dout[c] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / double(count);
    }
    backward(f, d, sm.input.data(), nullptr, ws, dout, grad);
  }
  return loss / double(count);
}

ForecasterHandle train_forecaster(ModelKind kind, const NonBurstSeries& train,
                                  const NormalizationParams& norm,
                                  const TrainConfig& cfg, uint64_t seed) {
  if (cfg.window < kMinBurstWindow)
    throw Error("train_forecaster: window must be >= " + std::to_string(kMinBurstWindow));
  if (train.epochs() < 2 * cfg.window)
    throw Error("train_forecaster: series has " + std::to_string(train.epochs()) +
                " epochs, need at least 2w = " + std::to_string(2 * cfg.window));

  ForecasterHandle f;
  f.kind = kind;
  f.model_id = to_string(kind) + "-" + to_string(norm.scheme);
  f.window = cfg.window;
  f.nodes = train.nodes();
  f.seed = seed;
  f.norm = norm;
  switch (kind) {
    case ModelKind::SeasonalNaive:
      f.dropout_rate = 0.0;
      f.period = cfg.seasonal_period;
      if (f.period < 1 || f.period > cfg.window)
        throw Error("train_forecaster: seasonal period must be in [1, w]");
      break;
    case ModelKind::LinearAr:
      f.hidden = 0;
      break;
    case ModelKind::Mlp:
      f.hidden = cfg.mlp_hidden;
      break;
    case ModelKind::Recurrent:
      f.hidden = cfg.rnn_hidden;
      break;
  }
  const Dims d = dims_of(f);
  init_parameters(f, d);

  const SampleSet set = build_samples(train, norm, cfg.window);
  const size_t s_total = set.samples.size();
  if (s_total < 2) throw Error("train_forecaster: not enough samples");

  const size_t n_val = std::max<size_t>(1, size_t(std::llround(s_total * cfg.validation_fraction)));
  std::vector<size_t> train_idx, val_idx;
  for (size_t s = 0; s < s_total - n_val; ++s) train_idx.push_back(s);
  for (size_t s = s_total - n_val; s < s_total; ++s) val_idx.push_back(s);
  if (train_idx.empty()) throw Error("train_forecaster: empty training split");

  if (kind == ModelKind::SeasonalNaive) {
    f.best_val_loss = eval_loss(f, set, val_idx);
    // Constant predictive sigma: population std of raw-space residuals on
    // the validation slice.
    Workspace ws;
    std::vector<double> out, resid;
    for (size_t s : val_idx) {
      const Sample& sm = set.samples[s];
      forward(f, d, sm.input.data(), nullptr, ws, out);
      for (int c = 0; c < d.cells; ++c)
        if (sm.tmask[c])
          resid.push_back((out[c] - sm.target[c]) * sm.tgt_sigma[c]);
    }
    if (!resid.empty()) {
      const auto [mu, sigma] = pass_mean_std(resid);
      (void)mu;
      f.resid_sigma_mbps = sigma;
    }
    f.val_mae_mbps = raw_val_mae(f, set, val_idx);
    return f;
  }

  if (!cfg.use_kfold) {
    run_training(f, d, set, train_idx, val_idx, cfg, 0, nullptr);
    f.val_mae_mbps = raw_val_mae(f, set, val_idx);
    return f;
  }

  // Forward-chaining k-fold: contiguous blocks, round i trains on blocks
  // [0, i) and validates on block i; the epoch minimizing the mean validation
  // curve is then used to train on the full sample set.
  const int k = std::max(2, cfg.kfold_k);
  std::vector<std::vector<double>> curves;
  for (int round = 1; round < k; ++round) {
    const size_t lo = s_total * round / k;
    const size_t hi = s_total * (round + 1) / k;
    if (lo == 0 || hi <= lo) continue;
    std::vector<size_t> tr, va;
    for (size_t s = 0; s < lo; ++s) tr.push_back(s);
    for (size_t s = lo; s < hi; ++s) va.push_back(s);
    ForecasterHandle trial = f;
    init_parameters(trial, d);
    std::vector<double> curve;
    run_training(trial, d, set, tr, va, cfg, cfg.max_epochs, &curve);
    curves.push_back(std::move(curve));
  }
  int best_epoch = 1;
  double best_mean = std::numeric_limits<double>::infinity();
  for (int e = 0; e < cfg.max_epochs; ++e) {
    double sum = 0.0;
    int cnt = 0;
    for (const auto& c : curves)
      if (e < int(c.size())) {
        sum += c[e];
        ++cnt;
      }
    if (cnt == 0) break;
    const double mean = sum / cnt;
    if (mean < best_mean) {
      best_mean = mean;
      best_epoch = e + 1;
    }
  }
  init_parameters(f, d);
  std::vector<size_t> all_idx(s_total);
  std::iota(all_idx.begin(), all_idx.end(), 0);
  run_training(f, d, set, all_idx, val_idx, cfg, best_epoch, nullptr);
  f.val_mae_mbps = raw_val_mae(f, set, val_idx);
  return f;
}

namespace {

// Normalizes an input window with the handle's scheme and produces the
// flattened, 0-filled model input plus the inverse token.
struct PreparedInput {
  std::vector<double> flat;
  NormalizedWindow nw;
};

PreparedInput prepare(const ForecasterHandle& f, const InputWindow& window) {
  if (window.length != f.window)
    throw Error("predict: window length " + std::to_string(window.length) +
                " does not match trained length " + std::to_string(f.window));
  if (window.nodes != f.nodes) throw Error("predict: node count mismatch");
  PreparedInput pi;
  pi.nw = normalize(window, f.norm);
  const size_t total = pi.nw.values.size();
  pi.flat.assign(total, 0.0);
  for (size_t e = 0; e < total; ++e)
    if (pi.nw.present[e]) pi.flat[e] = pi.nw.values[e];
  return pi;
}

}  // namespace

DemandMatrix predict(const ForecasterHandle& f, const InputWindow& window) {
  const Dims d = dims_of(f);
  PreparedInput pi = prepare(f, window);
  Workspace ws;
  std::vector<double> out;
  forward(f, d, pi.flat.data(), nullptr, ws, out);
  DemandMatrix dm(f.nodes, 0);
  for (int i = 0; i < f.nodes; ++i)
    for (int j = 0; j < f.nodes; ++j) {
      if (i == j) continue;
      const size_t c = size_t(i) * f.nodes + j;
      dm.at(i, j) = std::max(0.0, pi.nw.denormalize(out[c], i, j));
    }
  return dm;
}

DemandMatrix predict(const ForecasterHandle& f, const Window& window) {
  return predict(f, make_input(window));
}

std::pair<double, double> pass_mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mu = sum / double(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return {mu, std::sqrt(ss / double(values.size()))};
}

McPrediction mc_predict(const ForecasterHandle& f, const InputWindow& window,
                        int passes, uint64_t seed) {
  if (passes < 2) throw Error("mc_predict: need at least 2 passes");
  McPrediction r;
  r.nodes = f.nodes;
  const int cells = f.nodes * f.nodes;

  if (f.kind == ModelKind::SeasonalNaive) {
    const DemandMatrix dm = predict(f, window);
    r.mu = dm.values;
    r.sigma.assign(cells, 0.0);
    for (int i = 0; i < f.nodes; ++i)
      for (int j = 0; j < f.nodes; ++j)
        if (i != j) r.sigma[size_t(i) * f.nodes + j] = f.resid_sigma_mbps;
    return r;
  }
  if (f.dropout_rate <= 0.0) {
    const DemandMatrix dm = predict(f, window);
    r.mu = dm.values;
    r.sigma.assign(cells, 0.0);
    return r;
  }

  const Dims d = dims_of(f);
  PreparedInput pi = prepare(f, window);
  const uint64_t base = seed != 0 ? seed : f.seed;
  std::vector<double> sum(cells, 0.0), sumsq(cells, 0.0), out;
  Workspace ws;
  for (int pass = 0; pass < passes; ++pass) {
    Rng rng(derive_seed(base, "mc-pass", uint64_t(pass)));
    DropoutPlan plan = draw_plan(f.kind, d, f.dropout_rate, rng);
    forward(f, d, pi.flat.data(), &plan, ws, out);
    for (int c = 0; c < cells; ++c) {
      sum[c] += out[c];
      sumsq[c] += out[c] * out[c];
    }
  }
  r.mu.assign(cells, 0.0);
  r.sigma.assign(cells, 0.0);
  for (int i = 0; i < f.nodes; ++i)
    for (int j = 0; j < f.nodes; ++j) {
      if (i == j) continue;
      const size_t c = size_t(i) * f.nodes + j;
      const double mean_z = sum[c] / passes;
      const double var_z = std::max(0.0, sumsq[c] / passes - mean_z * mean_z);
      r.mu[c] = std::max(0.0, pi.nw.denormalize(mean_z, i, j));
      r.sigma[c] = std::sqrt(var_z) * pi.nw.scale(i, j);
    }
  return r;
}

McPrediction mc_predict(const ForecasterHandle& f, const Window& window, int passes,
                        uint64_t seed) {
  return mc_predict(f, make_input(window), passes, seed);
}

// ---------------------------------------------------------------------------
// Burst occurrence classifier
// ---------------------------------------------------------------------------

BinaryWindow binary_window(const BurstSeries& series, int end, int w) {
  if (end < 0 || end >= series.epochs() || end - w + 1 < 0)
    throw Error("binary_window: slice out of range");
  BinaryWindow bw;
  bw.length = w;
  bw.nodes = series.nodes();
  bw.bits.assign(size_t(w) * bw.nodes * bw.nodes, 0);
  for (int k = 0; k < w; ++k)
    for (int i = 0; i < bw.nodes; ++i)
      for (int j = 0; j < bw.nodes; ++j)
        bw.bits[bw.idx(k, i, j)] = series.burst(end - w + 1 + k, i, j) ? 1 : 0;
  return bw;
}

namespace {

// Feature vector for one OD pair: own indicator lags plus the per-lag burst
// fraction across all off-diagonal pairs.
void burst_features(const BinaryWindow& bw, int i, int j, std::vector<double>& feat) {
  const int w = bw.length;
  const int n = bw.nodes;
  feat.assign(size_t(2) * w, 0.0);
  const double denom = double(n) * n - n;
  for (int k = 0; k < w; ++k) {
    feat[k] = bw.bits[bw.idx(k, i, j)];
    int cnt = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b) cnt += bw.bits[bw.idx(k, a, b)];
    feat[size_t(w) + k] = denom > 0 ? cnt / denom : 0.0;
  }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::vector<double> burst_probabilities(const BurstClassifierHandle& c,
                                        const BinaryWindow& window) {
  if (window.length != c.window)
    throw Error("burst_probabilities: window length mismatch");
  const int n = window.nodes;
  const int w = window.length;
  std::vector<double> probs(size_t(n) * n, 0.0);
  std::vector<double> feat;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      burst_features(window, i, j, feat);
      double z = c.parameters[size_t(2) * w];
      for (int k = 0; k < 2 * w; ++k) z += c.parameters[k] * feat[k];
      probs[size_t(i) * n + j] = sigmoid(z);
    }
  return probs;
}

std::vector<uint8_t> classify_burst(const BurstClassifierHandle& c,
                                    const BinaryWindow& window) {
  const std::vector<double> probs = burst_probabilities(c, window);
  std::vector<uint8_t> out(probs.size(), 0);
  for (size_t k = 0; k < probs.size(); ++k) out[k] = probs[k] >= c.threshold ? 1 : 0;
  return out;
}

BurstClassifierHandle train_burst_classifier(const BurstSeries& burst_train,
                                             const TrainConfig& cfg, uint64_t seed) {
  const int w = cfg.window;
  const int n = burst_train.nodes();
  if (burst_train.epochs() < 2 * w)
    throw Error("train_burst_classifier: series too short, need 2w epochs");

  BurstClassifierHandle c;
  c.window = w;
  c.nodes = n;
  c.seed = seed;
  c.parameters.assign(size_t(2) * w + 1, 0.0);

  if (burst_train.count() == 0) {
    c.zero_burst_warning = true;
    c.parameters.back() = -10.0;  // sigmoid(-10) ~ 0: degenerate always-0
    return c;
  }

  // Flatten (sample, od) pairs into feature rows; keep all positives plus a
  // deterministic subsample of negatives to keep L1 training balanced.
  struct Row {
    std::vector<double> feat;
    double target;
  };
  std::vector<Row> rows;
  Rng sub_rng(derive_seed(seed, "subsample"));
  std::vector<double> feat;
  const int t_total = burst_train.epochs();
  long long positives = 0, negatives_total = 0;
  for (int s = w - 1; s + 1 < t_total; ++s)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && burst_train.burst(s + 1, i, j)) ++positives;
  for (int s = w - 1; s + 1 < t_total; ++s)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && !burst_train.burst(s + 1, i, j)) ++negatives_total;
  // Cap negatives at 8x the positives (at least 256 rows).
  const long long neg_cap = std::max<long long>(256, 8 * positives);
  const double keep_p =
      negatives_total > 0 ? std::min(1.0, double(neg_cap) / double(negatives_total)) : 1.0;

  for (int s = w - 1; s + 1 < t_total; ++s) {
    BinaryWindow bw = binary_window(burst_train, s, w);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const bool pos = burst_train.burst(s + 1, i, j);
        if (!pos && sub_rng.u01() >= keep_p) continue;
        burst_features(bw, i, j, feat);
        rows.push_back({feat, pos ? 1.0 : 0.0});
      }
  }
  if (rows.size() < 4) {
    c.zero_burst_warning = true;
    c.parameters.back() = -10.0;
    return c;
  }

  const size_t n_val = std::max<size_t>(1, rows.size() / 10);
  const size_t n_train = rows.size() - n_val;

  Adam adam;
  TrainConfig ccfg = cfg;
  std::vector<double> grad(c.parameters.size());
  std::vector<double> best = c.parameters;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  auto val_loss = [&]() {
    double loss = 0.0;
    for (size_t r = n_train; r < rows.size(); ++r) {
      double z = c.parameters.back();
      for (size_t k = 0; k < rows[r].feat.size(); ++k)
        z += c.parameters[k] * rows[r].feat[k];
      loss += std::abs(sigmoid(z) - rows[r].target);
    }
    return loss / double(n_val);
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "clf-shuffle", uint64_t(epoch)));
    std::vector<size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    order = shuffled(std::move(order), shuffle_rng);
    for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const size_t e = std::min(order.size(), b + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (size_t q = b; q < e; ++q) {
        const Row& row = rows[order[q]];
        double z = c.parameters.back();
        for (size_t k = 0; k < row.feat.size(); ++k) z += c.parameters[k] * row.feat[k];
        const double p = sigmoid(z);
        const double r = p - row.target;
        const double dz = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) * p * (1.0 - p) /
                          double(e - b);
        for (size_t k = 0; k < row.feat.size(); ++k) grad[k] += dz * row.feat[k];
        grad.back() += dz;
      }
      adam.update(c.parameters, grad, ccfg);
    }
    const double val = val_loss();
    if (!std::isfinite(val)) throw Error("burst classifier training diverged");
    if (val < best_val) {
      best_val = val;
      best = c.parameters;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  c.parameters = std::move(best);
  c.best_val_loss = best_val;
  return c;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

nlohmann::json norm_to_json(const NormalizationParams& p) {
  return {{"scheme", to_string(p.scheme)},
          {"sigma_floor", p.sigma_floor},
          {"nodes", p.nodes},
          {"glob_mu", p.glob_mu},
          {"glob_sigma", p.glob_sigma},
          {"indv_mu", p.indv_mu},
          {"indv_sigma", p.indv_sigma},
          {"empty_pair_warning", p.empty_pair_warning}};
}

NormalizationParams norm_from_json(const nlohmann::json& j) {
  NormalizationParams p;
  p.scheme = norm_scheme_from_string(j.at("scheme").get<std::string>());
  p.sigma_floor = j.at("sigma_floor").get<double>();
  p.nodes = j.at("nodes").get<int>();
  p.glob_mu = j.at("glob_mu").get<double>();
  p.glob_sigma = j.at("glob_sigma").get<double>();
  p.indv_mu = j.at("indv_mu").get<std::vector<double>>();
  p.indv_sigma = j.at("indv_sigma").get<std::vector<double>>();
  p.empty_pair_warning = j.at("empty_pair_warning").get<bool>();
  return p;
}

}  // namespace

void save_forecaster(const ForecasterHandle& f, const std::string& path) {
  nlohmann::json j;
  j["format"] = "tubo-model-v1";
  j["model_id"] = f.model_id;
  j["kind"] = to_string(f.kind);
  j["window"] = f.window;
  j["nodes"] = f.nodes;
  j["hidden"] = f.hidden;
  j["period"] = f.period;
  j["dropout_rate"] = f.dropout_rate;
  j["seed"] = f.seed;
  j["norm"] = norm_to_json(f.norm);
  j["parameters"] = f.parameters;
  j["resid_sigma_mbps"] = f.resid_sigma_mbps;
  j["best_val_loss"] = f.best_val_loss;
  j["val_mae_mbps"] = f.val_mae_mbps;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_forecaster: cannot open " + path);
  out << j.dump(2) << "\n";
}

ForecasterHandle load_forecaster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_forecaster: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("format").get<std::string>() != "tubo-model-v1")
    throw Error("load_forecaster: unsupported format tag in " + path);
  ForecasterHandle f;
  f.model_id = j.at("model_id").get<std::string>();
  f.kind = model_kind_from_string(j.at("kind").get<std::string>());
  f.window = j.at("window").get<int>();
  f.nodes = j.at("nodes").get<int>();
  f.hidden = j.at("hidden").get<int>();
  f.period = j.at("period").get<int>();
  f.dropout_rate = j.at("dropout_rate").get<double>();
  f.seed = j.at("seed").get<uint64_t>();
  f.norm = norm_from_json(j.at("norm"));
  f.parameters = j.at("parameters").get<std::vector<double>>();
  f.resid_sigma_mbps = j.at("resid_sigma_mbps").get<double>();
  f.best_val_loss = j.at("best_val_loss").get<double>();
  f.val_mae_mbps = j.value("val_mae_mbps", 0.0);
  return f;
}

void save_burst_classifier(const BurstClassifierHandle& c, const std::string& path) {
  nlohmann::json j;
  j["format"] = "tubo-burst-clf-v1";
  j["model_id"] = c.model_id;
  j["window"] = c.window;
  j["nodes"] = c.nodes;
  j["threshold"] = c.threshold;
  j["seed"] = c.seed;
  j["parameters"] = c.parameters;
  j["zero_burst_warning"] = c.zero_burst_warning;
  j["best_val_loss"] = c.best_val_loss;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_burst_classifier: cannot open " + path);
  out << j.dump(2) << "\n";
}

BurstClassifierHandle load_burst_classifier(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_burst_classifier: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("format").get<std::string>() != "tubo-burst-clf-v1")
    throw Error("load_burst_classifier: unsupported format tag in " + path);
  BurstClassifierHandle c;
  c.model_id = j.at("model_id").get<std::string>();
  c.window = j.at("window").get<int>();
  c.nodes = j.at("nodes").get<int>();
  c.threshold = j.at("threshold").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.parameters = j.at("parameters").get<std::vector<double>>();
  c.zero_burst_warning = j.at("zero_burst_warning").get<bool>();
  c.best_val_loss = j.at("best_val_loss").get<double>();
  return c;
}

}  // namespace tubo

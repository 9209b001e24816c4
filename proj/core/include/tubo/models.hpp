#ifndef TUBO_MODELS_HPP
#define TUBO_MODELS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tubo/preprocess.hpp"
#include "tubo/types.hpp"

namespace tubo {

enum class ModelKind { SeasonalNaive, LinearAr, Mlp, Recurrent };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

/// Training hyperparameters. Defaults follow the evaluation protocol:
/// Adam with lr 0.002, betas (0.9, 0.98), weight decay 1e-5, at most 100
/// training epochs, and a 60/40 style last-fraction validation holdout
/// (k-fold with k=10 available behind use_kfold, forward-chaining folds).
struct TrainConfig {
  double learning_rate = 0.002;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double weight_decay = 1e-5;
  int max_epochs = 100;
  int window = 128;
  int batch_size = 32;
  int patience = 15;
  double validation_fraction = 0.1;
  bool use_kfold = false;
  int kfold_k = 10;
  int seasonal_period = 24;
  int mlp_hidden = 24;
  int rnn_hidden = 16;
};

/// A trained pool member. Pure data; behavior lives in the free functions
/// below so handles can be persisted and reloaded bit-exactly.
struct ForecasterHandle {
  std::string model_id;
  ModelKind kind = ModelKind::SeasonalNaive;
  int window = 0;
  int nodes = 0;
  int hidden = 0;  // mlp / recurrent
  int period = 0;  // seasonal naive
  double dropout_rate = 0.1;
  uint64_t seed = 0;
  NormalizationParams norm;
  std::vector<double> parameters;
  double resid_sigma_mbps = 0.0;  // seasonal naive: constant predictive sigma
  double best_val_loss = 0.0;     // normalized masked MAE on the holdout
  double val_mae_mbps = 0.0;      // raw-space holdout MAE, comparable across schemes
};

/// One training sample: normalized input (masked cells filled with 0, the
/// scheme mean), normalized target and its mask, plus the exact inverse
/// token for the target.
struct Sample {
  std::vector<double> input;      // w * n * n
  std::vector<double> target;     // n * n
  std::vector<uint8_t> tmask;     // n * n, 1 = contributes to loss
  std::vector<double> tgt_mu;     // n * n
  std::vector<double> tgt_sigma;  // n * n
};

struct SampleSet {
  int window = 0;
  int nodes = 0;
  std::vector<Sample> samples;
};

/// Builds supervised one-step-ahead samples from a (typically zero-imputed)
/// non-burst series, exactly as train_forecaster does internally.
SampleSet build_samples(const NonBurstSeries& train, const NormalizationParams& norm,
                        int w);

/// Masked mean-absolute-error over the given samples, deterministic forward.
double eval_loss(const ForecasterHandle& f, const SampleSet& set,
                 const std::vector<size_t>& indices);

/// Loss plus analytic gradient w.r.t. the flat parameter vector (data term
/// only; weight decay is applied by the optimizer, not here).
double loss_and_grad(const ForecasterHandle& f, const SampleSet& set,
                     const std::vector<size_t>& indices, std::vector<double>& grad);

/// Trains one pool member with Adam on masked L1 loss and returns the best
/// validation checkpoint. Single-threaded and bit-reproducible given
/// (seed, cfg, data).
ForecasterHandle train_forecaster(ModelKind kind, const NonBurstSeries& train,
                                  const NormalizationParams& norm,
                                  const TrainConfig& cfg, uint64_t seed);

/// One-step-ahead forecast in Mbps, dropout disabled, negatives clamped to 0,
/// diagonal zero. Window length must match the trained window.
DemandMatrix predict(const ForecasterHandle& f, const Window& window);
DemandMatrix predict(const ForecasterHandle& f, const InputWindow& window);

/// Per-element MC-dropout mean and uncertainty, denormalized.
struct McPrediction {
  int nodes = 0;
  std::vector<double> mu;     // n * n, clamped >= 0 after averaging
  std::vector<double> sigma;  // n * n, population std over passes
};

/// Runs `passes` stochastic forward passes with dropout active. With
/// dropout_rate == 0 this returns exactly (predict, 0); a seasonal-naive
/// member reports its constant validation-residual sigma instead.
/// seed 0 means "derive from the handle's seed".
McPrediction mc_predict(const ForecasterHandle& f, const Window& window, int passes,
                        uint64_t seed = 0);
McPrediction mc_predict(const ForecasterHandle& f, const InputWindow& window,
                        int passes, uint64_t seed = 0);

/// Population mean/std over MC pass values; the per-element reduction used
/// by mc_predict.
std::pair<double, double> pass_mean_std(const std::vector<double>& values);

/// Binary burst-occurrence classifier: shared logistic model over each OD
/// pair's own indicator lags plus the per-lag burst fraction across all
/// pairs, trained with L1 loss against 0/1 targets.
struct BurstClassifierHandle {
  std::string model_id = "burst-clf";
  int window = 0;
  int nodes = 0;
  double threshold = 0.5;
  uint64_t seed = 0;
  std::vector<double> parameters;  // [own lags (w), cross lags (w), bias]
  bool zero_burst_warning = false;
  double best_val_loss = 0.0;
};

/// w-length binary history window ending at `end`.
struct BinaryWindow {
  int length = 0;
  int nodes = 0;
  std::vector<uint8_t> bits;  // w * n * n

  size_t idx(int k, int i, int j) const {
    return (size_t(k) * nodes + i) * nodes + j;
  }
};

BinaryWindow binary_window(const BurstSeries& series, int end, int w);

BurstClassifierHandle train_burst_classifier(const BurstSeries& burst_train,
                                             const TrainConfig& cfg, uint64_t seed);

/// Per-OD burst probabilities in [0,1] for the epoch after the window.
std::vector<double> burst_probabilities(const BurstClassifierHandle& c,
                                        const BinaryWindow& window);

/// Probability >= threshold (inclusive) maps to indicator 1.
std::vector<uint8_t> classify_burst(const BurstClassifierHandle& c,
                                    const BinaryWindow& window);

/// Versioned JSON persistence; reload reproduces predictions bit-exactly.
void save_forecaster(const ForecasterHandle& f, const std::string& path);
ForecasterHandle load_forecaster(const std::string& path);
void save_burst_classifier(const BurstClassifierHandle& c, const std::string& path);
BurstClassifierHandle load_burst_classifier(const std::string& path);

}  // namespace tubo

#endif  // TUBO_MODELS_HPP

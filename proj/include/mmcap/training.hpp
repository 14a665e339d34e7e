#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmcap/model.hpp"

namespace mmcap {

struct SequenceLossResult {
  Value total;      // -sum_i log P(y_i | s_{i-1}, c_i) - log P(<eos> | s_M)
  Value per_token;  // total / (M + 1)
  int token_count = 0;
};

// Teacher-forced cross entropy over one reference sentence (ids, no <sos>/<eos>).
SequenceLossResult sequence_loss(Graph& g, const CaptionModel& model,
                                 const std::vector<FeatureSequence>& features,
                                 const std::vector<int>& reference);

// Per-parameter accumulators for RMSprop (acc1 = mean square gradient) or
// AdaDelta (acc1 = E[g^2], acc2 = E[dx^2]). L2 enters by adding l2 * theta to
// the gradient before the accumulator updates.
struct OptimizerState {
  std::string kind;  // "rmsprop" | "adadelta"
  double lr = 0.0;
  double rho = 0.0;
  double epsilon = 0.0;
  double l2 = 0.0;
  std::vector<Tensor> acc1;
  std::vector<Tensor> acc2;

  static OptimizerState rmsprop(std::span<Param* const> params, double lr = 1e-3,
                                double rho = 0.9, double epsilon = 1e-8, double l2 = 1e-6);
  static OptimizerState adadelta(std::span<Param* const> params, double rho = 0.95,
                                 double epsilon = 1e-6, double l2 = 1e-6);
};

void rmsprop_update(std::span<Param* const> params, OptimizerState& state);
void adadelta_update(std::span<Param* const> params, OptimizerState& state);
void optimizer_update(std::span<Param* const> params, OptimizerState& state);

// Scales gradients so their global L2 norm does not exceed max_norm; returns
// the pre-clip norm.
double clip_gradients(std::span<Param* const> params, double max_norm);

struct TrainSample {
  std::string clip_id;
  std::shared_ptr<const std::vector<FeatureSequence>> features;
  std::vector<int> reference;
};

struct TrainConfig {
  int epochs = 1;
  int batch_size = 1;
  uint64_t seed = 1;
  std::string optimizer = "rmsprop";
  std::optional<double> lr;       // rmsprop only; default 1e-3
  std::optional<double> rho;      // default 0.9 (rmsprop) / 0.95 (adadelta)
  std::optional<double> epsilon;  // default 1e-8 (rmsprop) / 1e-6 (adadelta)
  double l2 = 1e-6;
  double clip_norm = 5.0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // per-token
  double val_loss = 0.0;    // per-token
  long long wall_ms = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

OptimizerState make_optimizer(std::span<Param* const> params, const TrainConfig& cfg);

// Seeds the RNG, initializes the model, and runs minibatch teacher-forced
// training. Gradients are accumulated per sample (no padding) and normalized
// by the batch token count. on_epoch fires after validation with is_best set
// when the epoch improved the best validation loss.
TrainResult train(CaptionModel& model, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&, bool is_best)>& on_epoch = nullptr);

// Forward-only mean per-token loss over a sample set.
double evaluate_loss(const CaptionModel& model, const std::vector<TrainSample>& samples);

}  // namespace mmcap

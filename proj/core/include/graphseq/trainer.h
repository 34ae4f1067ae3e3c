#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "graphseq/batching.h"
#include "graphseq/checkpoint.h"
#include "graphseq/loss.h"
#include "graphseq/model.h"

namespace graphseq {

struct TrainConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-7;
  double grad_clip_norm = 1.0;
  int batch_size = 16;
  int max_epochs = 30;
  // Stop once validation loss has not improved for this many epochs
  // (0 disables). The schedule still spans max_epochs.
  int patience = 0;
  std::uint64_t seed = 0;
  int workers = 0;  // 0 means std::thread::hardware_concurrency()

  // Throws ConfigError on a non-positive hyperparameter.
  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Linear decay from base_lr at step 0 to zero at total_steps.
double linear_lr(double base_lr, long step, long total_steps);

// Scales `grad` in place so its L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<double> grad, double max_norm);

// One Adam update with L2 weight decay folded into the gradient.
void adam_step(std::span<double> params, std::span<const double> grad,
               OptimizerState& state, double lr, const TrainConfig& config);

// Mean of per-batch target-token totals over the epoch-0 batching.
double estimate_expected_tokens(const std::vector<Example>& dataset,
                                int batch_size, std::uint64_t seed);

struct BatchResult {
  double loss = 0.0;     // under the requested LossSpec
  double nll_sum = 0.0;  // summed NLL over all targets in the batch
  long tokens = 0;
  std::vector<double> grad;  // d(loss)/d(params), empty if not requested
};

// Loss (and gradient) of a batch. Per-example work is spread over
// `workers` threads; per-example gradients are reduced in batch order, so
// the result does not depend on the worker count.
BatchResult batch_loss(const ModelParams& params,
                       const std::vector<Example>& dataset,
                       const std::vector<int>& indices, const LossSpec& spec,
                       bool with_grad, int workers = 1);

// Mean per-example NLL over the dataset (the per_example form).
double validation_loss(const ModelParams& params,
                       const std::vector<Example>& dataset, int workers = 1);

// Everything needed to continue training exactly where it stopped.
struct TrainState {
  ModelParams params;
  OptimizerState optimizer;
  int epochs_done = 0;
  ModelParams best_params;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::vector<double> val_losses;

  static TrainState start(const ModelParams& init);
  Checkpoint best_checkpoint() const;
  Checkpoint last_checkpoint() const;
  // Rebuilds the state from the two checkpoints written by a previous run.
  static TrainState resume(const Checkpoint& last, const Checkpoint& best);
};

struct TrainHooks {
  std::ostream* log = nullptr;  // one line per step and per epoch
  // Called after each epoch with the updated state.
  std::function<void(const TrainState&)> on_epoch;
  // Stop after this many epochs in this call (-1: run to max_epochs).
  int epoch_limit = -1;
};

// Trains until max_epochs, early stopping or epoch_limit. Throws
// DivergenceError on a non-finite loss or gradient.
TrainState train(TrainState state, const std::vector<Example>& train_set,
                 const std::vector<Example>& val_set, const TrainConfig& config,
                 const LossSpec& spec, const TrainHooks& hooks = {});

}  // namespace graphseq

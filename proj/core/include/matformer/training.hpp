#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "matformer/graph.hpp"
#include "matformer/model.hpp"
#include "matformer/tensor.hpp"

namespace matformer {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

struct AdamState {
  std::map<std::string, tensor::Matrix> m;
  std::map<std::string, tensor::Matrix> v;
  long step = 0;
};

/// Adam with decoupled weight decay: w <- w - lr*wd*w, then the
/// bias-corrected Adam update. Parameters without a gradient see g = 0.
/// Throws TrainingError (leaving every parameter untouched) if any gradient
/// is non-finite.
void adam_step(tensor::ParameterStore& params, AdamState& state, double lr, const AdamConfig& config = {});

/// Cosine warm-up from lr_max/div to lr_max over the first pct_start of the
/// run, then cosine decay to lr_max/final_div at step == total_steps.
double one_cycle_lr(long step, long total_steps, double lr_max, double pct_start = 0.3, double div = 25.0,
                    double final_div = 1e4);

double mae(std::span<const double> preds, std::span<const double> targets);
/// Fraction of |pred - target| strictly below `threshold`.
double ewt(std::span<const double> preds, std::span<const double> targets, double threshold);

struct TrainConfig {
  double lr_max = 1e-3;
  int epochs = 500;
  int batch_size = 64;
  double weight_decay = 1e-5;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div = 1e4;
  std::uint64_t seed = 0;
  /// Stop after this many optimizer steps (0 = epochs * batches per epoch).
  long max_steps = 0;
  /// Global gradient-norm clip; disabled when unset.
  std::optional<double> grad_clip;
};

/// Overrides fields from `key = value` entries (lr_max, epochs, batch_size,
/// weight_decay, pct_start, div_factor, final_div, seed, max_steps, grad_clip).
TrainConfig train_config_from(const std::map<std::string, std::string>& entries, TrainConfig base = {});

/// Overrides model fields (n_layers, n_heads, d_model, readout_hidden,
/// n_kernels, rbf_lo, rbf_hi, attention) and validates the result.
ModelConfig model_config_from(const std::map<std::string, std::string>& entries, ModelConfig base = {});

struct GraphDataset {
  std::vector<std::string> ids;
  std::vector<CrystalGraph> graphs;
  std::vector<double> targets;

  std::size_t size() const { return graphs.size(); }
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double ewt_001 = 0.0;
  double ewt_002 = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::string best_checkpoint;
  double best_val_mae = 0.0;
  int best_epoch = 0;
  long steps = 0;
};

/// Mean-squared-error training with Adam and a one-cycle schedule. Batches
/// are disjoint unions of graphs; the epoch order is shuffled from
/// `config.seed`. Validation MAE (eval mode) picks the best checkpoint; when
/// `val` is empty the training set is used instead.
TrainResult train(MatformerModel& model, const GraphDataset& train_set, const GraphDataset& val,
                  const TrainConfig& config);

/// Eval-mode predictions in dataset order.
std::vector<double> predict(MatformerModel& model, const GraphDataset& data, int batch_size = 64);

/// `epoch,lr,train_loss,val_mae,ewt_0.01,ewt_0.02`
std::string training_log_csv(const std::vector<EpochLog>& log);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle, then the first train_fraction go to train and the next
/// val_fraction to validation; the rest is test.
DatasetSplit split_indices(std::size_t n, double train_fraction, double val_fraction, std::uint64_t seed);

GraphDataset subset(const GraphDataset& data, std::span<const std::size_t> indices);

}  // namespace matformer

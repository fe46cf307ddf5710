// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ttr/params.hpp"

namespace ttr {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 100;
  int early_stop_patience = 30;          // epochs without validation improvement
  std::optional<int> scheduler_patience; // halve lr after this many stalled epochs; nullopt = off
  int grad_accumulation = 1;             // utterances per optimizer step
};

/// Adam over the unfrozen entries of one or more ParamStores. Stores and
/// entries are visited in fixed order, so updates are deterministic. Frozen
/// entries never receive updates; their gradient slots are cleared instead.
class Adam {
 public:
  Adam(std::vector<ParamStore*> stores, const OptimizerConfig& cfg);
  Adam(ParamStore& store, const OptimizerConfig& cfg) : Adam(std::vector{&store}, cfg) {}

  /// Applies one update from the accumulated gradients, then zeroes them.
  void step();

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  std::vector<ParamStore*> stores_;
  double lr_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<ad::Matrix>> m_, v_;  // per store, per entry
};

/// Halves the learning rate when the validation loss has not improved for
/// `patience` consecutive epochs; the stall counter resets after each halving.
class PlateauScheduler {
 public:
  PlateauScheduler(int patience) : patience_(patience) {}

  /// Returns true when this epoch triggers a halving.
  bool observe(double validation_loss);

 private:
  int patience_;
  int stalled_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

/// Stops after `patience` epochs without a new best validation loss and
/// remembers which epoch was best.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when the run should stop.
  bool observe(double validation_loss);
  bool improved_last() const { return improved_last_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  int patience_;
  int epoch_ = -1;
  int best_epoch_ = -1;
  int stalled_ = 0;
  bool improved_last_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

/// Append-only per-epoch records {epoch, split, loss, lr} as JSON lines.
/// Wall-clock timing stays out of the file so reruns are byte-identical.
class LossLog {
 public:
  explicit LossLog(const std::string& path);
  ~LossLog();
  LossLog(const LossLog&) = delete;
  LossLog& operator=(const LossLog&) = delete;

  void record(int epoch, const std::string& split, double loss, double lr);

 private:
  struct Impl;
  Impl* impl_;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = -1;
  double best_validation_loss = std::numeric_limits<double>::infinity();
};

/// One shuffled pass over train_size items per epoch, gradient accumulation,
/// Adam step, validation sweep, optional plateau halving, early stopping, and
/// restoration of the best-validation parameter values on exit.
struct TrainLoop {
  std::function<double(std::size_t)> train_item;     // loss; accumulates grads into the store
  std::function<double(std::size_t)> validate_item;  // loss only
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  // Called after each epoch with (epoch, train_loss, validation_loss, lr).
  std::function<void(int, double, double, double)> on_epoch;
};

TrainHistory run_training(std::vector<ParamStore*> stores, const OptimizerConfig& cfg,
                          const TrainLoop& loop, std::uint64_t shuffle_seed, LossLog* log);

inline TrainHistory run_training(ParamStore& params, const OptimizerConfig& cfg,
                                 const TrainLoop& loop, std::uint64_t shuffle_seed, LossLog* log) {
  return run_training(std::vector{&params}, cfg, loop, shuffle_seed, log);
}

}  // namespace ttr

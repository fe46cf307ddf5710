// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/training.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ttr/errors.hpp"
#include "ttr/rng.hpp"

namespace ttr {

Adam::Adam(std::vector<ParamStore*> stores, const OptimizerConfig& cfg)
    : stores_(std::move(stores)),
      lr_(cfg.learning_rate),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.epsilon) {
  for (ParamStore* store : stores_) {
    std::vector<ad::Matrix> m, v;
    m.reserve(store->size());
    v.reserve(store->size());
    for (const auto& e : store->entries()) {
      m.push_back(ad::Matrix::Zero(e.value.rows(), e.value.cols()));
      v.push_back(ad::Matrix::Zero(e.value.rows(), e.value.cols()));
    }
    m_.push_back(std::move(m));
    v_.push_back(std::move(v));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t s = 0; s < stores_.size(); ++s) {
    for (std::size_t i = 0; i < stores_[s]->entries().size(); ++i) {
      auto& e = stores_[s]->entries()[i];
      if (e.frozen) {
        e.grad.setZero();
        continue;
      }
      if (!e.grad.allFinite()) throw NumericError("Adam: non-finite gradient for " + e.name);
      m_[s][i] = beta1_ * m_[s][i] + (1.0 - beta1_) * e.grad;
      v_[s][i] = beta2_ * v_[s][i] + (1.0 - beta2_) * e.grad.cwiseProduct(e.grad);
      const ad::Matrix mhat = m_[s][i] / bc1;
      const ad::Matrix vhat = v_[s][i] / bc2;
      e.value.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
      e.grad.setZero();
    }
  }
}

bool PlateauScheduler::observe(double validation_loss) {
  if (validation_loss < best_) {
    best_ = validation_loss;
    stalled_ = 0;
    return false;
  }
  ++stalled_;
  if (stalled_ >= patience_) {
    stalled_ = 0;
    return true;
  }
  return false;
}

bool EarlyStopping::observe(double validation_loss) {
  ++epoch_;
  if (validation_loss < best_) {
    best_ = validation_loss;
    best_epoch_ = epoch_;
    stalled_ = 0;
    improved_last_ = true;
    return false;
  }
  improved_last_ = false;
  ++stalled_;
  return stalled_ >= patience_;
}

TrainHistory run_training(std::vector<ParamStore*> stores, const OptimizerConfig& cfg,
                          const TrainLoop& loop, std::uint64_t shuffle_seed, LossLog* log) {
  if (loop.train_size == 0) throw std::invalid_argument("run_training: empty training set");
  if (loop.validation_size == 0) throw std::invalid_argument("run_training: empty validation set");

  Adam adam(stores, cfg);
  EarlyStopping stopper(cfg.early_stop_patience);
  std::optional<PlateauScheduler> scheduler;
  if (cfg.scheduler_patience) scheduler.emplace(*cfg.scheduler_patience);

  TrainHistory history;
  std::vector<std::vector<ad::Matrix>> best_values;

  std::vector<std::size_t> order(loop.train_size);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    // Fisher-Yates with a per-epoch derived seed keeps runs reproducible.
    Rng rng(derive_seed(shuffle_seed, "epoch:" + std::to_string(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(order[i - 1], order[j]);
    }

    double train_sum = 0.0;
    int pending = 0;
    for (std::size_t idx : order) {
      train_sum += loop.train_item(idx);
      if (++pending == cfg.grad_accumulation) {
        for (ParamStore* s : stores) s->scale_grads(1.0 / pending);
        adam.step();
        pending = 0;
      }
    }
    if (pending > 0) {
      for (ParamStore* s : stores) s->scale_grads(1.0 / pending);
      adam.step();
    }
    const double train_loss = train_sum / static_cast<double>(loop.train_size);

    double val_sum = 0.0;
    for (std::size_t i = 0; i < loop.validation_size; ++i) val_sum += loop.validate_item(i);
    const double val_loss = val_sum / static_cast<double>(loop.validation_size);

    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw NumericError("run_training: non-finite loss at epoch " + std::to_string(epoch));

    history.train_loss.push_back(train_loss);
    history.validation_loss.push_back(val_loss);
    if (log) {
      log->record(epoch, "train", train_loss, adam.learning_rate());
      log->record(epoch, "validation", val_loss, adam.learning_rate());
    }
    if (loop.on_epoch) loop.on_epoch(epoch, train_loss, val_loss, adam.learning_rate());

    const bool stop_now = stopper.observe(val_loss);
    if (stopper.improved_last()) {
      best_values.clear();
      for (ParamStore* s : stores) {
        std::vector<ad::Matrix> vals;
        vals.reserve(s->size());
        for (const auto& e : s->entries()) vals.push_back(e.value);
        best_values.push_back(std::move(vals));
      }
    }
    if (scheduler && scheduler->observe(val_loss))
      adam.set_learning_rate(adam.learning_rate() * 0.5);
    if (stop_now) break;
  }

  history.best_epoch = stopper.best_epoch();
  history.best_validation_loss = stopper.best_loss();
  if (!best_values.empty()) {
    for (std::size_t s = 0; s < stores.size(); ++s)
      for (std::size_t i = 0; i < stores[s]->entries().size(); ++i)
        stores[s]->entries()[i].value = best_values[s][i];
  }
  return history;
}

struct LossLog::Impl {
  std::ofstream os;
};

LossLog::LossLog(const std::string& path) : impl_(new Impl) {
  impl_->os.open(path, std::ios::app);
  if (!impl_->os) {
    delete impl_;
    throw IoError("cannot open loss log: " + path);
  }
}

LossLog::~LossLog() { delete impl_; }

void LossLog::record(int epoch, const std::string& split, double loss, double lr) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["loss"] = loss;
  j["lr"] = lr;
  impl_->os << j.dump() << "\n";
  impl_->os.flush();
}

}  // namespace ttr

#include "invnet/train.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "invnet/error.hpp"
#include "invnet/model.hpp"
#include "invnet/rng.hpp"

namespace invnet {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ArgumentError("learning rate must be >= 0");
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw ArgumentError("invalid Adam hyperparameters");
  }
}

void adam_step(const std::vector<ParamSlot>& params, AdamState& state, const TrainConfig& cfg) {
  std::size_t k = 0;
  const bool fresh = state.m.empty();
  for (const auto& slot : params) {
    if (!slot.trainable) continue;
    if (!slot.grad || slot.grad->shape() != slot.value->shape()) {
      throw ShapeError("adam_step: gradient for " + slot.name + " does not match its parameter");
    }
    if (fresh) {
      state.m.emplace_back(slot.value->shape());
      state.v.emplace_back(slot.value->shape());
    }
    if (k >= state.m.size() || state.m[k].shape() != slot.value->shape()) {
      throw ShapeError("adam_step: optimizer state does not match parameter " + slot.name);
    }
    ++k;
  }
  if (k != state.m.size()) throw ShapeError("adam_step: optimizer state has a different parameter count");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  k = 0;
  for (const auto& slot : params) {
    if (!slot.trainable) continue;
    Tensor& p = *slot.value;
    const Tensor& g = *slot.grad;
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    ++k;
  }
}

// ---------------------------------------------------------------- metrics

std::int64_t Confusion::total() const noexcept {
  return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

Metrics metrics_from_confusion(const Confusion& confusion) {
  for (const auto& row : confusion.counts)
    for (auto v : row)
      if (v < 0) throw ArgumentError("confusion counts must be non-negative");
  const auto total = confusion.total();
  if (total == 0) throw ArgumentError("confusion matrix is all zero");

  Metrics m;
  m.confusion = confusion;
  const auto& c = confusion.counts;
  m.accuracy = 100.0 * static_cast<double>(c[0][0] + c[1][1]) / static_cast<double>(total);
  for (int k = 0; k < 2; ++k) {
    const double tp = static_cast<double>(c[k][k]);
    const double fn = static_cast<double>(c[k][1 - k]);
    const double fp = static_cast<double>(c[1 - k][k]);
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.class_recall[k] = 100.0 * recall;
    m.class_precision[k] = 100.0 * precision;
    m.class_f1[k] = 100.0 * f1;
  }
  m.recall = (m.class_recall[0] + m.class_recall[1]) / 2.0;
  m.f1 = (m.class_f1[0] + m.class_f1[1]) / 2.0;
  return m;
}

Confusion confusion_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw ArgumentError("truth and prediction counts differ");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] > 1 || predicted[i] < 0 || predicted[i] > 1) throw ArgumentError("class out of range");
    ++c.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return c;
}

// ---------------------------------------------------------------- evaluation

std::vector<int> predict_classes(Model& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                                 int batch_size) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         indices.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor logits = model.predict(stack_images(ds, chunk));
    const auto classes = logits.dim(1);
    for (std::int64_t n = 0; n < logits.dim(0); ++n) {
      int best = 0;
      for (std::int64_t k = 1; k < classes; ++k) {
        if (logits[static_cast<std::size_t>(n * classes + k)] > logits[static_cast<std::size_t>(n * classes + best)]) {
          best = static_cast<int>(k);
        }
      }
      out.push_back(best);
    }
  }
  return out;
}

Metrics evaluate_indices(Model& model, const Dataset& ds, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("cannot evaluate an empty split");
  return metrics_from_confusion(confusion_from_predictions(labels_of(ds, indices), predict_classes(model, ds, indices)));
}

Metrics evaluate(Model& model, const Dataset& ds, Split split) {
  const auto idx = ds.indices(split);
  if (idx.empty()) throw DataError("split '" + std::string(split_name(split)) + "' is empty");
  return evaluate_indices(model, ds, idx);
}

// ---------------------------------------------------------------- training

TrainResult train(Model& model, const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  std::vector<std::size_t> train_idx = ds.indices(Split::Train);
  const auto val_idx = ds.indices(Split::Val);
  if (train_idx.empty()) throw DataError("training split is empty");
  if (val_idx.empty()) throw DataError("validation split is empty");

  const Rng master(cfg.seed);
  Rng shuffle_rng = master.derive("shuffle");
  Rng dropout_rng = master.derive("dropout");
  AdamState adam;
  TrainResult result;

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = train_idx.size(); i > 1; --i) std::swap(train_idx[i - 1], train_idx[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += batch) {
      const auto end = std::min(train_idx.size(), start + batch);
      const std::vector<std::size_t> chunk(train_idx.begin() + static_cast<std::ptrdiff_t>(start),
                                           train_idx.begin() + static_cast<std::ptrdiff_t>(end));
      const Tensor logits = model.forward(stack_images(ds, chunk), Mode::Train, dropout_rng);
      const SoftmaxXentResult loss = softmax_xent(logits, one_hot(labels_of(ds, chunk), kClassCount));
      if (!std::isfinite(loss.loss)) throw NumericError("training loss became non-finite");
      model.backward(loss.dlogits);
      adam_step(model.parameters(), adam, cfg);
      loss_sum += loss.loss * static_cast<double>(chunk.size());
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(train_idx.size());
    log.val = evaluate_indices(model, ds, val_idx);
    if (on_epoch) on_epoch(log);
    result.epochs.push_back(log);
  }
  return result;
}

std::string epoch_log_csv(const TrainResult& result) {
  std::string out = "epoch,train_loss,val_accuracy,val_recall,val_f1\n";
  char line[160];
  for (const auto& e : result.epochs) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.4f,%.4f,%.4f\n", e.epoch, e.train_loss, e.val.accuracy, e.val.recall,
                  e.val.f1);
    out += line;
  }
  return out;
}

}  // namespace invnet

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "invnet/data.hpp"
#include "invnet/layer.hpp"

namespace invnet {

class Model;

struct TrainConfig {
  double learning_rate = 1e-5;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// First and second moments for every trainable slot, in slot order.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

/// One Adam update over the trainable slots; frozen slots are skipped.
void adam_step(const std::vector<ParamSlot>& params, AdamState& state, const TrainConfig& cfg);

/// 2x2 counts, rows = true class, columns = predicted class.
struct Confusion {
  std::array<std::array<std::int64_t, 2>, 2> counts{};

  std::int64_t total() const noexcept;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Percentages in [0, 100]. Recall and F1 are macro averages over classes.
struct Metrics {
  double accuracy = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::array<double, 2> class_precision{};
  std::array<double, 2> class_recall{};
  std::array<double, 2> class_f1{};
  Confusion confusion;
};

Metrics metrics_from_confusion(const Confusion& confusion);
Confusion confusion_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  Metrics val;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch Adam on the train split, reshuffled every epoch from the
/// config seed; the last partial batch is kept. Validation metrics are
/// computed after each epoch in infer mode.
TrainResult train(Model& model, const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Argmax predictions for the selected items, evaluated in batches.
std::vector<int> predict_classes(Model& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                                 int batch_size = 64);

Metrics evaluate(Model& model, const Dataset& ds, Split split);
Metrics evaluate_indices(Model& model, const Dataset& ds, const std::vector<std::size_t>& indices);

/// "epoch,train_loss,val_accuracy,val_recall,val_f1" plus one row per epoch.
std::string epoch_log_csv(const TrainResult& result);

}  // namespace invnet

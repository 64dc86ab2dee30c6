#pragma once

// Stateful layer wrappers used by Model. Each layer caches what its
// backward needs during forward and overwrites its gradients on backward.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "invnet/involution.hpp"
#include "invnet/layers.hpp"
#include "invnet/tensor.hpp"

namespace invnet {

class Rng;

/// A parameter tensor with its gradient. Non-trainable slots (BN running
/// statistics) have no gradient.
struct ParamSlot {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool trainable = true;
};

enum class LayerKind { Involution, Conv2D, MaxPool2D, BatchNorm, Flatten, Dense, Dropout };

/// Row label used in model summaries ("Involution Layer", "Dense", ...).
std::string_view layer_display_name(LayerKind kind);

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const noexcept { return name_; }
  virtual LayerKind kind() const noexcept = 0;

  /// Per-sample output shape (no batch axis).
  virtual Shape output_shape(const Shape& input) const = 0;
  /// Secondary output reported in summaries (the involution kernel field).
  virtual std::optional<Shape> aux_shape(const Shape& /*input*/) const { return std::nullopt; }

  virtual Tensor forward(const Tensor& x, Mode mode, Rng& rng) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;

  virtual std::vector<ParamSlot> parameters() { return {}; }
  /// Closed-form parameter count for the layer's configuration.
  virtual ParamCount param_count() const { return {}; }

  virtual std::unique_ptr<Layer> clone() const = 0;

 private:
  std::string name_;
};

/// Involution with fused ReLU.
class InvolutionLayer final : public Layer {
 public:
  InvolutionLayer(std::string name, InvolutionSpec spec, Rng& rng);

  LayerKind kind() const noexcept override { return LayerKind::Involution; }
  Shape output_shape(const Shape& input) const override;
  std::optional<Shape> aux_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<ParamSlot> parameters() override;
  ParamCount param_count() const override { return inv_param_count(spec_); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<InvolutionLayer>(*this); }

  const InvolutionSpec& spec() const noexcept { return spec_; }
  InvolutionWeights& weights() noexcept { return weights_; }
  const InvolutionWeights& weights() const noexcept { return weights_; }
  /// Kernel field of the most recent forward call.
  const KernelField& last_kernels() const noexcept { return kernels_; }

 private:
  InvolutionSpec spec_;
  InvolutionWeights weights_;
  InvolutionGrads grads_;
  Tensor input_;
  Tensor pre_activation_;
  KernelField kernels_;
  InvolutionCache cache_;
};

/// Valid convolution with optional fused ReLU.
class Conv2DLayer final : public Layer {
 public:
  Conv2DLayer(std::string name, std::int64_t kernel_size, std::int64_t in_channels, std::int64_t out_channels,
              bool relu, Rng& rng);

  LayerKind kind() const noexcept override { return LayerKind::Conv2D; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<ParamSlot> parameters() override;
  ParamCount param_count() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2DLayer>(*this); }

  Conv2DWeights& weights() noexcept { return weights_; }

 private:
  Conv2DWeights weights_;
  Conv2DGrads grads_;
  bool relu_;
  Tensor input_;
  Tensor output_;
};

class MaxPool2DLayer final : public Layer {
 public:
  MaxPool2DLayer(std::string name, PoolSpec spec) : Layer(std::move(name)), spec_(spec) {}

  LayerKind kind() const noexcept override { return LayerKind::MaxPool2D; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2DLayer>(*this); }

 private:
  PoolSpec spec_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(std::string name, std::int64_t channels);

  LayerKind kind() const noexcept override { return LayerKind::BatchNorm; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<ParamSlot> parameters() override;
  ParamCount param_count() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNormLayer>(*this); }

  BatchNormState& state() noexcept { return state_; }

 private:
  BatchNormState state_;
  BatchNormCache cache_;
  BatchNormGrads grads_;
};

class FlattenLayer final : public Layer {
 public:
  using Layer::Layer;

  LayerKind kind() const noexcept override { return LayerKind::Flatten; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<FlattenLayer>(*this); }

 private:
  Shape input_shape_;
};

/// Fully connected layer with optional fused ReLU.
class DenseLayer final : public Layer {
 public:
  DenseLayer(std::string name, std::int64_t fan_in, std::int64_t fan_out, bool relu, Rng& rng);

  LayerKind kind() const noexcept override { return LayerKind::Dense; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  std::vector<ParamSlot> parameters() override;
  ParamCount param_count() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }

  DenseWeights& weights() noexcept { return weights_; }

 private:
  DenseWeights weights_;
  DenseGrads grads_;
  bool relu_;
  Tensor input_;
  Tensor output_;
};

class DropoutLayer final : public Layer {
 public:
  DropoutLayer(std::string name, double rate);

  LayerKind kind() const noexcept override { return LayerKind::Dropout; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& dy) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DropoutLayer>(*this); }

  double rate() const noexcept { return rate_; }

 private:
  double rate_;
  Tensor mask_;
};

}  // namespace invnet

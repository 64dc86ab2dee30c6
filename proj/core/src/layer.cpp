#include "invnet/layer.hpp"

#include <string>

#include "invnet/error.hpp"
#include "invnet/rng.hpp"

namespace invnet {

namespace {

void require_forward(const Tensor& cached, const std::string& layer) {
  if (cached.empty()) throw StateError(layer + ": backward called before forward");
}

std::int64_t feature_count(const Shape& per_sample) {
  std::int64_t n = 1;
  for (auto e : per_sample) n *= e;
  return n;
}

}  // namespace

std::string_view layer_display_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Involution: return "Involution Layer";
    case LayerKind::Conv2D: return "Convolution Layer";
    case LayerKind::MaxPool2D: return "2D Max Pooling";
    case LayerKind::BatchNorm: return "Batch Normalization";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Dense: return "Dense";
    case LayerKind::Dropout: return "Dropout";
  }
  return "?";
}

// ---------------------------------------------------------------- involution

InvolutionLayer::InvolutionLayer(std::string name, InvolutionSpec spec, Rng& rng)
    : Layer(std::move(name)), spec_(spec), weights_(make_involution_weights(spec, rng)) {}

Shape InvolutionLayer::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[2] != spec_.channels) {
    throw ShapeError(name() + ": expects (H, W, " + std::to_string(spec_.channels) + ") input, got " +
                     shape_string(input));
  }
  return input;
}

std::optional<Shape> InvolutionLayer::aux_shape(const Shape& input) const {
  return Shape{input[0], input[1], spec_.taps(), 1, spec_.groups};
}

Tensor InvolutionLayer::forward(const Tensor& x, Mode mode, Rng&) {
  InvolutionResult r = involution_forward(x, weights_, spec_, mode);
  input_ = x;
  kernels_ = std::move(r.kernels);
  cache_ = std::move(r.cache);
  pre_activation_ = std::move(r.y);
  return relu_forward(pre_activation_);
}

Tensor InvolutionLayer::backward(const Tensor& dy) {
  require_forward(input_, name());
  grads_ = involution_backward(input_, weights_, spec_, kernels_, cache_, relu_backward(pre_activation_, dy));
  return grads_.dx;
}

std::vector<ParamSlot> InvolutionLayer::parameters() {
  return {{"w0", &weights_.w0, &grads_.dw0, true},
          {"bias0", &weights_.bias0, &grads_.dbias0, true},
          {"gamma", &weights_.bn.gamma, &grads_.dgamma, true},
          {"beta", &weights_.bn.beta, &grads_.dbeta, true},
          {"moving_mean", &weights_.bn.running_mean, nullptr, false},
          {"moving_variance", &weights_.bn.running_var, nullptr, false},
          {"w1", &weights_.w1, &grads_.dw1, true},
          {"bias1", &weights_.bias1, &grads_.dbias1, true}};
}

// ---------------------------------------------------------------- conv2d

Conv2DLayer::Conv2DLayer(std::string name, std::int64_t kernel_size, std::int64_t in_channels,
                         std::int64_t out_channels, bool relu, Rng& rng)
    : Layer(std::move(name)), weights_(make_conv2d_weights(kernel_size, in_channels, out_channels, rng)), relu_(relu) {}

Shape Conv2DLayer::output_shape(const Shape& input) const {
  const auto k = weights_.kernel_size();
  if (input.size() != 3 || input[2] != weights_.in_channels() || input[0] < k || input[1] < k) {
    throw ShapeError(name() + ": incompatible input " + shape_string(input));
  }
  return {input[0] - k + 1, input[1] - k + 1, weights_.out_channels()};
}

Tensor Conv2DLayer::forward(const Tensor& x, Mode, Rng&) {
  input_ = x;
  output_ = conv2d_forward(x, weights_);
  if (relu_) relu_inplace(output_);
  return output_;
}

Tensor Conv2DLayer::backward(const Tensor& dy) {
  require_forward(input_, name());
  grads_ = conv2d_backward(input_, weights_, relu_ ? relu_backward(output_, dy) : dy);
  return grads_.dx;
}

std::vector<ParamSlot> Conv2DLayer::parameters() {
  return {{"kernel", &weights_.kernels, &grads_.dkernels, true}, {"bias", &weights_.bias, &grads_.dbias, true}};
}

ParamCount Conv2DLayer::param_count() const {
  const auto n = conv2d_param_count(weights_.kernel_size(), weights_.in_channels(), weights_.out_channels());
  return {n, n, 0};
}

// ---------------------------------------------------------------- maxpool

Shape MaxPool2DLayer::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] < spec_.window || input[1] < spec_.window) {
    throw ShapeError(name() + ": incompatible input " + shape_string(input));
  }
  return {(input[0] - spec_.window) / spec_.stride + 1, (input[1] - spec_.window) / spec_.stride + 1, input[2]};
}

Tensor MaxPool2DLayer::forward(const Tensor& x, Mode, Rng&) {
  MaxPoolResult r = maxpool2d_forward(x, spec_);
  input_shape_ = x.shape();
  argmax_ = std::move(r.argmax);
  return std::move(r.y);
}

Tensor MaxPool2DLayer::backward(const Tensor& dy) {
  if (input_shape_.empty()) throw StateError(name() + ": backward called before forward");
  return maxpool2d_backward(input_shape_, argmax_, dy);
}

// ---------------------------------------------------------------- batchnorm

BatchNormLayer::BatchNormLayer(std::string name, std::int64_t channels)
    : Layer(std::move(name)), state_(make_batchnorm(channels)) {}

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode, Rng&) {
  BatchNormResult r = batchnorm_forward(x, state_, mode);
  cache_ = std::move(r.cache);
  return std::move(r.y);
}

Tensor BatchNormLayer::backward(const Tensor& dy) {
  require_forward(cache_.x_hat, name());
  grads_ = batchnorm_backward(dy, state_, cache_);
  return grads_.dx;
}

std::vector<ParamSlot> BatchNormLayer::parameters() {
  return {{"gamma", &state_.gamma, &grads_.dgamma, true},
          {"beta", &state_.beta, &grads_.dbeta, true},
          {"moving_mean", &state_.running_mean, nullptr, false},
          {"moving_variance", &state_.running_var, nullptr, false}};
}

ParamCount BatchNormLayer::param_count() const {
  const auto c = state_.channels();
  return {batchnorm_param_count(c), 2 * c, 2 * c};
}

// ---------------------------------------------------------------- flatten

Shape FlattenLayer::output_shape(const Shape& input) const { return {feature_count(input)}; }

Tensor FlattenLayer::forward(const Tensor& x, Mode, Rng&) {
  input_shape_ = x.shape();
  const auto n = x.dim(0);
  return x.reshaped({n, static_cast<std::int64_t>(x.size()) / n});
}

Tensor FlattenLayer::backward(const Tensor& dy) {
  if (input_shape_.empty()) throw StateError(name() + ": backward called before forward");
  return dy.reshaped(input_shape_);
}

// ---------------------------------------------------------------- dense

DenseLayer::DenseLayer(std::string name, std::int64_t fan_in, std::int64_t fan_out, bool relu, Rng& rng)
    : Layer(std::move(name)), weights_(make_dense_weights(fan_in, fan_out, rng)), relu_(relu) {}

Shape DenseLayer::output_shape(const Shape& input) const {
  if (input.size() != 1 || input[0] != weights_.fan_in()) {
    throw ShapeError(name() + ": incompatible input " + shape_string(input));
  }
  return {weights_.fan_out()};
}

Tensor DenseLayer::forward(const Tensor& x, Mode, Rng&) {
  input_ = x;
  output_ = dense_forward(x, weights_);
  if (relu_) relu_inplace(output_);
  return output_;
}

Tensor DenseLayer::backward(const Tensor& dy) {
  require_forward(input_, name());
  grads_ = dense_backward(input_, weights_, relu_ ? relu_backward(output_, dy) : dy);
  return grads_.dx;
}

std::vector<ParamSlot> DenseLayer::parameters() {
  return {{"kernel", &weights_.weight, &grads_.dweight, true}, {"bias", &weights_.bias, &grads_.dbias, true}};
}

ParamCount DenseLayer::param_count() const {
  const auto n = dense_param_count(weights_.fan_in(), weights_.fan_out());
  return {n, n, 0};
}

// ---------------------------------------------------------------- dropout

DropoutLayer::DropoutLayer(std::string name, double rate) : Layer(std::move(name)), rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout rate must lie in [0, 1)");
}

Tensor DropoutLayer::forward(const Tensor& x, Mode mode, Rng& rng) {
  DropoutResult r = dropout_forward(x, rate_, mode, rng);
  mask_ = std::move(r.mask);
  return std::move(r.y);
}

Tensor DropoutLayer::backward(const Tensor& dy) { return dropout_backward(mask_, dy); }

}  // namespace invnet

#pragma once

// Functional forward/backward kernels for the non-involution layers. Every
// backward takes the forward inputs (or the cache the forward returned) and
// produces exact gradients; none of them hold state between calls.

#include <cstdint>
#include <vector>

#include "invnet/tensor.hpp"

namespace invnet {

class Rng;

enum class Mode { Train, Infer };

// ---------------------------------------------------------------- conv2d

/// Valid-padding, stride-1 convolution weights. kernels: (K, K, C_in, C_out).
struct Conv2DWeights {
  Tensor kernels;
  Tensor bias;

  std::int64_t kernel_size() const { return kernels.dim(0); }
  std::int64_t in_channels() const { return kernels.dim(2); }
  std::int64_t out_channels() const { return kernels.dim(3); }
};

Conv2DWeights make_conv2d_weights(std::int64_t kernel_size, std::int64_t in_channels,
                                  std::int64_t out_channels, Rng& rng);
std::int64_t conv2d_param_count(std::int64_t kernel_size, std::int64_t in_channels,
                                std::int64_t out_channels);

Tensor conv2d_forward(const Tensor& x, const Conv2DWeights& w);

struct Conv2DGrads {
  Tensor dx;
  Tensor dkernels;
  Tensor dbias;
};
Conv2DGrads conv2d_backward(const Tensor& x, const Conv2DWeights& w, const Tensor& dy);

// ---------------------------------------------------------------- maxpool

struct PoolSpec {
  std::int64_t window = 2;
  std::int64_t stride = 2;
};

struct MaxPoolResult {
  Tensor y;
  /// Flat input offset of the selected element for every output element.
  std::vector<std::size_t> argmax;
};

/// Output extent floor((H - f) / s) + 1. Ties pick the first element in
/// row-major window order.
MaxPoolResult maxpool2d_forward(const Tensor& x, PoolSpec spec = {});
Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                          const Tensor& dy);

// ---------------------------------------------------------------- batchnorm

/// Per-channel normalization over every axis but the last.
struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;
  double epsilon = 1e-3;

  std::int64_t channels() const { return gamma.dim(0); }
};

BatchNormState make_batchnorm(std::int64_t channels, double momentum = 0.9, double epsilon = 1e-3);
inline std::int64_t batchnorm_param_count(std::int64_t channels) { return 4 * channels; }

struct BatchNormCache {
  Tensor x_hat;
  std::vector<double> inv_std;
  Mode mode = Mode::Infer;
};

struct BatchNormResult {
  Tensor y;
  BatchNormCache cache;
};

/// Train mode normalizes with batch statistics and folds them into the
/// running statistics; infer mode uses the running statistics only.
BatchNormResult batchnorm_forward(const Tensor& x, BatchNormState& state, Mode mode);

struct BatchNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};
BatchNormGrads batchnorm_backward(const Tensor& dy, const BatchNormState& state,
                                  const BatchNormCache& cache);

// ---------------------------------------------------------------- dense

struct DenseWeights {
  Tensor weight;  // (fan_in, fan_out)
  Tensor bias;    // (fan_out)

  std::int64_t fan_in() const { return weight.dim(0); }
  std::int64_t fan_out() const { return weight.dim(1); }
};

DenseWeights make_dense_weights(std::int64_t fan_in, std::int64_t fan_out, Rng& rng);
inline std::int64_t dense_param_count(std::int64_t fan_in, std::int64_t fan_out) {
  return fan_in * fan_out + fan_out;
}

Tensor dense_forward(const Tensor& x, const DenseWeights& w);

struct DenseGrads {
  Tensor dx;
  Tensor dweight;
  Tensor dbias;
};
DenseGrads dense_backward(const Tensor& x, const DenseWeights& w, const Tensor& dy);

// ---------------------------------------------------------------- relu

Tensor relu_forward(const Tensor& x);
/// Subgradient 0 at x == 0.
Tensor relu_backward(const Tensor& x, const Tensor& dy);
void relu_inplace(Tensor& x) noexcept;

// ---------------------------------------------------------------- dropout

struct DropoutResult {
  Tensor y;
  Tensor mask;  // 0 or 1/(1-rate); empty in infer mode
};

/// Inverted dropout. Infer mode returns x unchanged.
DropoutResult dropout_forward(const Tensor& x, double rate, Mode mode, Rng& rng);
Tensor dropout_backward(const Tensor& mask, const Tensor& dy);

// ---------------------------------------------------------------- loss

struct SoftmaxXentResult {
  double loss = 0.0;
  Tensor probs;
  Tensor dlogits;
};

/// Mean cross-entropy of row-wise softmax against one-hot labels (N x classes).
SoftmaxXentResult softmax_xent(const Tensor& logits, const Tensor& labels);

/// One-hot (N x classes) matrix from class indices.
Tensor one_hot(const std::vector<int>& labels, std::int64_t classes);

}  // namespace invnet

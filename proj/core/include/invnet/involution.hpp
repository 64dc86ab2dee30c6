#pragma once

// Involution: a K x K kernel is generated at every pixel from that pixel's
// channel vector by a small pointwise network (reduce -> BN -> ReLU ->
// expand) and then applied to the pixel's neighbourhood, shared by all
// channels of a group. Stride 1, zero "same" padding.

#include <cstdint>

#include "invnet/layers.hpp"
#include "invnet/tensor.hpp"

namespace invnet {

class Rng;

struct InvolutionSpec {
  std::int64_t channels = 3;
  std::int64_t kernel_size = 3;
  std::int64_t groups = 1;
  std::int64_t reduction_ratio = 2;

  /// max(1, floor(C / r)).
  std::int64_t reduced_channels() const noexcept;
  std::int64_t taps() const noexcept { return kernel_size * kernel_size; }
  std::int64_t kernel_channels() const noexcept { return taps() * groups; }
  std::int64_t channels_per_group() const noexcept { return channels / groups; }
  std::int64_t pad() const noexcept { return kernel_size / 2; }

  /// Throws ArgumentError for C % G != 0, even K, r < 1 or non-positive values.
  void validate() const;
};

/// Meta weights of the kernel-generation network.
struct InvolutionWeights {
  Tensor w0;          // (C_red, C)
  Tensor bias0;       // (C_red)
  BatchNormState bn;  // over C_red channels
  Tensor w1;          // (K*K*G, C_red)
  Tensor bias1;       // (K*K*G)
};

InvolutionWeights make_involution_weights(const InvolutionSpec& spec, Rng& rng);

struct ParamCount {
  std::int64_t total = 0;
  std::int64_t trainable = 0;
  std::int64_t non_trainable = 0;

  ParamCount& operator+=(const ParamCount& o) noexcept {
    total += o.total;
    trainable += o.trainable;
    non_trainable += o.non_trainable;
    return *this;
  }
  friend bool operator==(const ParamCount&, const ParamCount&) = default;
};

ParamCount inv_param_count(const InvolutionSpec& spec);

/// Generated kernels at every pixel. Stored (N, H, W, K*K*G) with the last
/// axis ordered tap-major: index = tap * G + group, tap = (u + K/2) * K + (v + K/2).
struct KernelField {
  Tensor values;
  std::int64_t taps = 0;
  std::int64_t groups = 0;

  double at(std::int64_t n, std::int64_t i, std::int64_t j, std::int64_t tap, std::int64_t group) const {
    return values.at(n, i, j, tap * groups + group);
  }
  /// Shape with the tap and group axes split out: (N, H, W, K*K, G).
  Shape full_shape() const;
};

/// Intermediates kept by the forward pass for backward.
struct InvolutionCache {
  Tensor reduced;    // w0 x + b0, (N, H, W, C_red)
  BatchNormCache bn;
  Tensor activated;  // ReLU(BN(reduced))
};

struct InvolutionResult {
  Tensor y;
  KernelField kernels;
  InvolutionCache cache;
};

/// Kernel generation alone. Train mode updates the BN running statistics.
KernelField involution_generate(const Tensor& x, InvolutionWeights& w, const InvolutionSpec& spec, Mode mode,
                                InvolutionCache* cache = nullptr);

/// Applies a kernel field to `x` (the aggregation step alone).
Tensor involution_apply(const Tensor& x, const KernelField& kernels, const InvolutionSpec& spec);

InvolutionResult involution_forward(const Tensor& x, InvolutionWeights& w, const InvolutionSpec& spec, Mode mode);

struct InvolutionGrads {
  Tensor dx;
  Tensor dw0;
  Tensor dbias0;
  Tensor dgamma;
  Tensor dbeta;
  Tensor dw1;
  Tensor dbias1;
};

/// Gradients through both the aggregation path and the kernel-generation path.
/// Throws StateError if `cache` is not from a forward call.
InvolutionGrads involution_backward(const Tensor& x, const InvolutionWeights& w, const InvolutionSpec& spec,
                                    const KernelField& kernels, const InvolutionCache& cache, const Tensor& dy);

}  // namespace invnet

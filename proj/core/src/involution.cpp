#include "invnet/involution.hpp"

#include <algorithm>
#include <string>

#include "invnet/error.hpp"
#include "invnet/rng.hpp"

namespace invnet {

std::int64_t InvolutionSpec::reduced_channels() const noexcept {
  return std::max<std::int64_t>(1, channels / reduction_ratio);
}

void InvolutionSpec::validate() const {
  if (channels < 1 || kernel_size < 1 || groups < 1 || reduction_ratio < 1) {
    throw ArgumentError("involution extents must be positive");
  }
  if (kernel_size % 2 == 0) throw ArgumentError("involution kernel size must be odd");
  if (channels % groups != 0) {
    throw ArgumentError("involution channels " + std::to_string(channels) + " not divisible by groups " +
                        std::to_string(groups));
  }
}

Shape KernelField::full_shape() const {
  // Tensor is limited to rank 4, so this is informational only.
  const auto& s = values.shape();
  return {s[0], s[1], s[2], taps, groups};
}

InvolutionWeights make_involution_weights(const InvolutionSpec& spec, Rng& rng) {
  spec.validate();
  const auto c = spec.channels, cr = spec.reduced_channels(), ko = spec.kernel_channels();
  InvolutionWeights w;
  w.w0 = glorot_uniform_init({cr, c}, c, cr, rng);
  w.bias0 = Tensor({cr}, 0.0);
  w.bn = make_batchnorm(cr);
  w.w1 = glorot_uniform_init({ko, cr}, cr, ko, rng);
  w.bias1 = Tensor({ko}, 0.0);
  return w;
}

ParamCount inv_param_count(const InvolutionSpec& spec) {
  spec.validate();
  const auto c = spec.channels, cr = spec.reduced_channels(), ko = spec.kernel_channels();
  ParamCount p;
  p.trainable = c * cr + cr + 2 * cr + cr * ko + ko;
  p.non_trainable = 2 * cr;
  p.total = p.trainable + p.non_trainable;
  return p;
}

namespace {

void check_input(const Tensor& x, const InvolutionSpec& spec) {
  require_rank4(x, "involution");
  if (x.dim(3) != spec.channels) {
    throw ShapeError("involution expects " + std::to_string(spec.channels) + " channels, got " +
                     shape_string(x.shape()));
  }
}

}  // namespace

KernelField involution_generate(const Tensor& x, InvolutionWeights& w, const InvolutionSpec& spec, Mode mode,
                                InvolutionCache* cache) {
  spec.validate();
  check_input(x, spec);
  const auto n = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const auto c = spec.channels, cr = spec.reduced_channels(), ko = spec.kernel_channels();
  const auto pixels = static_cast<std::size_t>(n * h * wd);

  Tensor reduced({n, h, wd, cr});
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* xp = &x[p * c];
    for (std::int64_t r = 0; r < cr; ++r) {
      double acc = w.bias0[r];
      for (std::int64_t ch = 0; ch < c; ++ch) acc += w.w0[r * c + ch] * xp[ch];
      reduced[p * cr + r] = acc;
    }
  }

  BatchNormResult normed = batchnorm_forward(reduced, w.bn, mode);
  Tensor activated = std::move(normed.y);
  relu_inplace(activated);

  KernelField field{Tensor({n, h, wd, ko}), spec.taps(), spec.groups};
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* a = &activated[p * cr];
    double* out = &field.values[p * ko];
    for (std::int64_t o = 0; o < ko; ++o) {
      double acc = w.bias1[o];
      for (std::int64_t r = 0; r < cr; ++r) acc += w.w1[o * cr + r] * a[r];
      out[o] = acc;
    }
  }

  if (cache) {
    cache->reduced = std::move(reduced);
    cache->bn = std::move(normed.cache);
    cache->activated = std::move(activated);
  }
  return field;
}

Tensor involution_apply(const Tensor& x, const KernelField& kernels, const InvolutionSpec& spec) {
  check_input(x, spec);
  const auto n = x.dim(0), h = x.dim(1), wd = x.dim(2), c = spec.channels;
  const auto k = spec.kernel_size, pad = spec.pad(), g_count = spec.groups, per_group = spec.channels_per_group();
  if (kernels.values.shape() != Shape{n, h, wd, spec.kernel_channels()}) {
    throw ShapeError("kernel field " + shape_string(kernels.values.shape()) + " does not match input " +
                     shape_string(x.shape()));
  }
  Tensor y(x.shape());
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < wd; ++j) {
        double* out = &y.at(b, i, j, 0);
        const double* kern = &kernels.values.at(b, i, j, 0);
        for (std::int64_t u = 0; u < k; ++u) {
          const auto si = i + u - pad;
          if (si < 0 || si >= h) continue;
          for (std::int64_t v = 0; v < k; ++v) {
            const auto sj = j + v - pad;
            if (sj < 0 || sj >= wd) continue;
            const double* src = &x.at(b, si, sj, 0);
            const double* tap = kern + (u * k + v) * g_count;
            for (std::int64_t ch = 0; ch < c; ++ch) out[ch] += tap[ch / per_group] * src[ch];
          }
        }
      }
    }
  }
  return y;
}

InvolutionResult involution_forward(const Tensor& x, InvolutionWeights& w, const InvolutionSpec& spec, Mode mode) {
  InvolutionResult r;
  r.kernels = involution_generate(x, w, spec, mode, &r.cache);
  r.y = involution_apply(x, r.kernels, spec);
  r.y.require_finite("involution output");
  return r;
}

InvolutionGrads involution_backward(const Tensor& x, const InvolutionWeights& w, const InvolutionSpec& spec,
                                    const KernelField& kernels, const InvolutionCache& cache, const Tensor& dy) {
  if (cache.activated.empty() || cache.reduced.empty()) {
    throw StateError("involution_backward called without a forward cache");
  }
  check_input(x, spec);
  if (dy.shape() != x.shape()) throw ShapeError("involution_backward: dy shape mismatch");
  const auto n = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const auto c = spec.channels, cr = spec.reduced_channels(), ko = spec.kernel_channels();
  const auto k = spec.kernel_size, pad = spec.pad(), g_count = spec.groups, per_group = spec.channels_per_group();
  const auto pixels = static_cast<std::size_t>(n * h * wd);

  InvolutionGrads g{Tensor(x.shape()), Tensor(w.w0.shape()), Tensor(w.bias0.shape()), Tensor(),
                    Tensor(),          Tensor(w.w1.shape()), Tensor(w.bias1.shape())};

  // Aggregation path: y is bilinear in (kernels, x).
  Tensor dkernels(kernels.values.shape());
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < wd; ++j) {
        const double* d_out = &dy.at(b, i, j, 0);
        const double* kern = &kernels.values.at(b, i, j, 0);
        double* d_kern = &dkernels.at(b, i, j, 0);
        for (std::int64_t u = 0; u < k; ++u) {
          const auto si = i + u - pad;
          if (si < 0 || si >= h) continue;
          for (std::int64_t v = 0; v < k; ++v) {
            const auto sj = j + v - pad;
            if (sj < 0 || sj >= wd) continue;
            const double* src = &x.at(b, si, sj, 0);
            double* d_src = &g.dx.at(b, si, sj, 0);
            const auto tap = (u * k + v) * g_count;
            for (std::int64_t ch = 0; ch < c; ++ch) {
              const auto grp = ch / per_group;
              d_kern[tap + grp] += d_out[ch] * src[ch];
              d_src[ch] += kern[tap + grp] * d_out[ch];
            }
          }
        }
      }
    }
  }

  // Generation path: expand, ReLU, BN, reduce.
  Tensor dactivated(cache.activated.shape());
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* dk = &dkernels[p * ko];
    const double* a = &cache.activated[p * cr];
    double* da = &dactivated[p * cr];
    for (std::int64_t o = 0; o < ko; ++o) {
      g.dbias1[o] += dk[o];
      for (std::int64_t r = 0; r < cr; ++r) {
        g.dw1[o * cr + r] += dk[o] * a[r];
        da[r] += dk[o] * w.w1[o * cr + r];
      }
    }
    for (std::int64_t r = 0; r < cr; ++r) {
      if (!(a[r] > 0.0)) da[r] = 0.0;
    }
  }

  BatchNormGrads bn = batchnorm_backward(dactivated, w.bn, cache.bn);
  g.dgamma = std::move(bn.dgamma);
  g.dbeta = std::move(bn.dbeta);

  for (std::size_t p = 0; p < pixels; ++p) {
    const double* dr = &bn.dx[p * cr];
    const double* xp = &x[p * c];
    double* dxp = &g.dx[p * c];
    for (std::int64_t r = 0; r < cr; ++r) {
      g.dbias0[r] += dr[r];
      for (std::int64_t ch = 0; ch < c; ++ch) {
        g.dw0[r * c + ch] += dr[r] * xp[ch];
        dxp[ch] += dr[r] * w.w0[r * c + ch];
      }
    }
  }
  return g;
}

}  // namespace invnet

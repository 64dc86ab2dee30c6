#include "invnet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "invnet/error.hpp"
#include "invnet/rng.hpp"

namespace invnet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstRowVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

std::int64_t as_i64(std::size_t v) { return static_cast<std::int64_t>(v); }

// Rows are output positions (n, i, j); columns run over (u, v, c) to match the
// row-major (K, K, C_in, C_out) kernel layout.
RowMatrix im2col(const Tensor& x, std::int64_t k) {
  const auto n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const auto ho = h - k + 1, wo = w - k + 1;
  RowMatrix cols(n * ho * wo, k * k * c);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < ho; ++i) {
      for (std::int64_t j = 0; j < wo; ++j) {
        double* row = cols.row((b * ho + i) * wo + j).data();
        for (std::int64_t u = 0; u < k; ++u) {
          const double* src = &x.at(b, i + u, j, 0);
          std::copy(src, src + k * c, row + u * k * c);
        }
      }
    }
  }
  return cols;
}

void col2im_add(const RowMatrix& cols, std::int64_t k, Tensor& dx) {
  const auto n = dx.dim(0), h = dx.dim(1), w = dx.dim(2), c = dx.dim(3);
  const auto ho = h - k + 1, wo = w - k + 1;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < ho; ++i) {
      for (std::int64_t j = 0; j < wo; ++j) {
        const double* row = cols.row((b * ho + i) * wo + j).data();
        for (std::int64_t u = 0; u < k; ++u) {
          double* dst = &dx.at(b, i + u, j, 0);
          const double* src = row + u * k * c;
          for (std::int64_t t = 0; t < k * c; ++t) dst[t] += src[t];
        }
      }
    }
  }
}

std::int64_t channel_count(const Tensor& x) { return x.shape().back(); }

}  // namespace

// ---------------------------------------------------------------- conv2d

Conv2DWeights make_conv2d_weights(std::int64_t kernel_size, std::int64_t in_channels,
                                  std::int64_t out_channels, Rng& rng) {
  const auto area = kernel_size * kernel_size;
  return {glorot_uniform_init({kernel_size, kernel_size, in_channels, out_channels}, area * in_channels,
                              area * out_channels, rng),
          Tensor({out_channels}, 0.0)};
}

std::int64_t conv2d_param_count(std::int64_t kernel_size, std::int64_t in_channels,
                                std::int64_t out_channels) {
  return kernel_size * kernel_size * in_channels * out_channels + out_channels;
}

Tensor conv2d_forward(const Tensor& x, const Conv2DWeights& w) {
  require_rank4(x, "conv2d");
  const auto k = w.kernel_size();
  if (x.dim(3) != w.in_channels()) {
    throw ShapeError("conv2d expects " + std::to_string(w.in_channels()) + " input channels, got " +
                     std::to_string(x.dim(3)));
  }
  if (x.dim(1) < k || x.dim(2) < k) {
    throw ShapeError("conv2d input " + shape_string(x.shape()) + " smaller than kernel " + std::to_string(k));
  }
  const auto ho = x.dim(1) - k + 1, wo = x.dim(2) - k + 1, cout = w.out_channels();
  Tensor y({x.dim(0), ho, wo, cout});
  const RowMatrix cols = im2col(x, k);
  MatrixMap out(y.raw(), cols.rows(), cout);
  out.noalias() = cols * ConstMatrixMap(w.kernels.raw(), cols.cols(), cout);
  out.rowwise() += ConstRowVectorMap(w.bias.raw(), cout);
  return y;
}

Conv2DGrads conv2d_backward(const Tensor& x, const Conv2DWeights& w, const Tensor& dy) {
  require_rank4(x, "conv2d_backward");
  const auto k = w.kernel_size(), cout = w.out_channels();
  const RowMatrix cols = im2col(x, k);
  if (as_i64(dy.size()) != cols.rows() * cout) throw ShapeError("conv2d_backward: dy shape mismatch");
  ConstMatrixMap dout(dy.raw(), cols.rows(), cout);

  Conv2DGrads g{Tensor(x.shape()), Tensor(w.kernels.shape()), Tensor(w.bias.shape())};
  MatrixMap(g.dkernels.raw(), cols.cols(), cout).noalias() = cols.transpose() * dout;
  Eigen::Map<Eigen::RowVectorXd>(g.dbias.raw(), cout) = dout.colwise().sum();
  const RowMatrix dcols = dout * ConstMatrixMap(w.kernels.raw(), cols.cols(), cout).transpose();
  col2im_add(dcols, k, g.dx);
  return g;
}

// ---------------------------------------------------------------- maxpool

MaxPoolResult maxpool2d_forward(const Tensor& x, PoolSpec spec) {
  require_rank4(x, "maxpool2d");
  if (spec.window < 1 || spec.stride < 1) throw ShapeError("pool window and stride must be positive");
  const auto n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h < spec.window || w < spec.window) {
    throw ShapeError("maxpool2d input " + shape_string(x.shape()) + " smaller than window");
  }
  const auto ho = (h - spec.window) / spec.stride + 1;
  const auto wo = (w - spec.window) / spec.stride + 1;
  MaxPoolResult r{Tensor({n, ho, wo, c}), {}};
  r.argmax.resize(r.y.size());
  std::size_t out = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < ho; ++i) {
      for (std::int64_t j = 0; j < wo; ++j) {
        for (std::int64_t ch = 0; ch < c; ++ch, ++out) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_at = 0;
          bool first = true;
          for (std::int64_t m = 0; m < spec.window; ++m) {
            for (std::int64_t q = 0; q < spec.window; ++q) {
              const std::size_t at =
                  static_cast<std::size_t>(((b * h + i * spec.stride + m) * w + j * spec.stride + q) * c + ch);
              if (first || x[at] > best) {
                best = x[at];
                best_at = at;
                first = false;
              }
            }
          }
          r.y[out] = best;
          r.argmax[out] = best_at;
        }
      }
    }
  }
  return r;
}

Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax, const Tensor& dy) {
  if (argmax.size() != dy.size()) throw ShapeError("maxpool2d_backward: dy does not match forward output");
  Tensor dx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

// ---------------------------------------------------------------- batchnorm

BatchNormState make_batchnorm(std::int64_t channels, double momentum, double epsilon) {
  return {Tensor({channels}, 1.0), Tensor({channels}, 0.0), Tensor({channels}, 0.0), Tensor({channels}, 1.0),
          momentum, epsilon};
}

BatchNormResult batchnorm_forward(const Tensor& x, BatchNormState& state, Mode mode) {
  if (x.empty()) throw StateError("batchnorm on an empty batch");
  const auto c = state.channels();
  if (channel_count(x) != c) {
    throw ShapeError("batchnorm expects " + std::to_string(c) + " channels, got " + shape_string(x.shape()));
  }
  const std::size_t rows = x.size() / static_cast<std::size_t>(c);
  const auto cs = static_cast<std::size_t>(c);

  std::vector<double> mean(cs, 0.0), var(cs, 0.0);
  if (mode == Mode::Train) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t ch = 0; ch < cs; ++ch) mean[ch] += x[r * cs + ch];
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t ch = 0; ch < cs; ++ch) {
        const double d = x[r * cs + ch] - mean[ch];
        var[ch] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<double>(rows);
    for (std::size_t ch = 0; ch < cs; ++ch) {
      state.running_mean[ch] = state.momentum * state.running_mean[ch] + (1.0 - state.momentum) * mean[ch];
      state.running_var[ch] = state.momentum * state.running_var[ch] + (1.0 - state.momentum) * var[ch];
    }
  } else {
    for (std::size_t ch = 0; ch < cs; ++ch) {
      mean[ch] = state.running_mean[ch];
      var[ch] = state.running_var[ch];
    }
  }

  BatchNormResult r{Tensor(x.shape()), {Tensor(x.shape()), std::vector<double>(cs), mode}};
  for (std::size_t ch = 0; ch < cs; ++ch) r.cache.inv_std[ch] = 1.0 / std::sqrt(var[ch] + state.epsilon);
  for (std::size_t r_ = 0; r_ < rows; ++r_) {
    for (std::size_t ch = 0; ch < cs; ++ch) {
      const std::size_t at = r_ * cs + ch;
      const double xh = (x[at] - mean[ch]) * r.cache.inv_std[ch];
      r.cache.x_hat[at] = xh;
      r.y[at] = state.gamma[ch] * xh + state.beta[ch];
    }
  }
  return r;
}

BatchNormGrads batchnorm_backward(const Tensor& dy, const BatchNormState& state, const BatchNormCache& cache) {
  if (cache.x_hat.empty()) throw StateError("batchnorm_backward called without a forward cache");
  if (dy.size() != cache.x_hat.size()) throw ShapeError("batchnorm_backward: dy shape mismatch");
  const auto cs = static_cast<std::size_t>(state.channels());
  const std::size_t rows = dy.size() / cs;

  BatchNormGrads g{Tensor(dy.shape()), Tensor({state.channels()}), Tensor({state.channels()})};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < cs; ++ch) {
      g.dbeta[ch] += dy[r * cs + ch];
      g.dgamma[ch] += dy[r * cs + ch] * cache.x_hat[r * cs + ch];
    }
  }
  if (cache.mode == Mode::Infer) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t ch = 0; ch < cs; ++ch)
        g.dx[r * cs + ch] = dy[r * cs + ch] * state.gamma[ch] * cache.inv_std[ch];
    return g;
  }
  // dx = gamma * inv_std / M * (M dy - sum(dy) - x_hat * sum(dy x_hat))
  const double m = static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < cs; ++ch) {
      const std::size_t at = r * cs + ch;
      g.dx[at] = state.gamma[ch] * cache.inv_std[ch] / m *
                 (m * dy[at] - g.dbeta[ch] - cache.x_hat[at] * g.dgamma[ch]);
    }
  }
  return g;
}

// ---------------------------------------------------------------- dense

DenseWeights make_dense_weights(std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  return {glorot_uniform_init({fan_in, fan_out}, fan_in, fan_out, rng), Tensor({fan_out}, 0.0)};
}

Tensor dense_forward(const Tensor& x, const DenseWeights& w) {
  if (x.rank() != 2 || x.dim(1) != w.fan_in()) {
    throw ShapeError("dense expects (N, " + std::to_string(w.fan_in()) + "), got " + shape_string(x.shape()));
  }
  Tensor y({x.dim(0), w.fan_out()});
  MatrixMap out(y.raw(), x.dim(0), w.fan_out());
  out.noalias() = ConstMatrixMap(x.raw(), x.dim(0), w.fan_in()) * ConstMatrixMap(w.weight.raw(), w.fan_in(), w.fan_out());
  out.rowwise() += ConstRowVectorMap(w.bias.raw(), w.fan_out());
  return y;
}

DenseGrads dense_backward(const Tensor& x, const DenseWeights& w, const Tensor& dy) {
  if (dy.rank() != 2 || dy.dim(0) != x.dim(0) || dy.dim(1) != w.fan_out()) {
    throw ShapeError("dense_backward: dy shape " + shape_string(dy.shape()));
  }
  const auto n = x.dim(0);
  ConstMatrixMap xin(x.raw(), n, w.fan_in());
  ConstMatrixMap dout(dy.raw(), n, w.fan_out());
  DenseGrads g{Tensor(x.shape()), Tensor(w.weight.shape()), Tensor(w.bias.shape())};
  MatrixMap(g.dx.raw(), n, w.fan_in()).noalias() =
      dout * ConstMatrixMap(w.weight.raw(), w.fan_in(), w.fan_out()).transpose();
  MatrixMap(g.dweight.raw(), w.fan_in(), w.fan_out()).noalias() = xin.transpose() * dout;
  Eigen::Map<Eigen::RowVectorXd>(g.dbias.raw(), w.fan_out()) = dout.colwise().sum();
  return g;
}

// ---------------------------------------------------------------- relu

void relu_inplace(Tensor& x) noexcept {
  for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  relu_inplace(y);
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (x.size() != dy.size()) throw ShapeError("relu_backward: dy shape mismatch");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

// ---------------------------------------------------------------- dropout

DropoutResult dropout_forward(const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout rate must lie in [0, 1)");
  if (mode == Mode::Infer || rate == 0.0) return {x, Tensor()};
  const double keep_scale = 1.0 / (1.0 - rate);
  DropoutResult r{Tensor(x.shape()), Tensor(x.shape())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    r.y[i] = x[i] * r.mask[i];
  }
  return r;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& dy) {
  if (mask.empty()) return dy;
  if (mask.size() != dy.size()) throw ShapeError("dropout_backward: dy shape mismatch");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * mask[i];
  return dx;
}

// ---------------------------------------------------------------- loss

SoftmaxXentResult softmax_xent(const Tensor& logits, const Tensor& labels) {
  if (logits.rank() != 2 || labels.shape() != logits.shape()) {
    throw ShapeError("softmax_xent expects matching (N, classes) logits and labels");
  }
  logits.require_finite("softmax_xent logits");
  const auto n = logits.dim(0), k = logits.dim(1);
  SoftmaxXentResult r{0.0, Tensor(logits.shape()), Tensor(logits.shape())};
  for (std::int64_t i = 0; i < n; ++i) {
    const double* z = &logits[static_cast<std::size_t>(i * k)];
    const double* t = &labels[static_cast<std::size_t>(i * k)];
    int hot = -1;
    for (std::int64_t j = 0; j < k; ++j) {
      if (t[j] == 1.0 && hot < 0) {
        hot = static_cast<int>(j);
      } else if (t[j] != 0.0) {
        throw ArgumentError("labels row " + std::to_string(i) + " is not one-hot");
      }
    }
    if (hot < 0) throw ArgumentError("labels row " + std::to_string(i) + " is not one-hot");
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::int64_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    const double log_denom = std::log(denom);
    for (std::int64_t j = 0; j < k; ++j) {
      const std::size_t at = static_cast<std::size_t>(i * k + j);
      r.probs[at] = std::exp(z[j] - zmax - log_denom);
      r.dlogits[at] = (r.probs[at] - t[j]) / static_cast<double>(n);
    }
    r.loss -= z[hot] - zmax - log_denom;
  }
  r.loss /= static_cast<double>(n);
  return r;
}

Tensor one_hot(const std::vector<int>& labels, std::int64_t classes) {
  Tensor t({static_cast<std::int64_t>(labels.size()), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw ArgumentError("label out of range");
    t[i * static_cast<std::size_t>(classes) + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return t;
}

}  // namespace invnet

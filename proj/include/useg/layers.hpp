#pragma once

#include "useg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace useg {

enum class Mode { train, eval };

/// Gradients of one layer op: w.r.t. its input and each named parameter.
template <typename Scalar>
struct LayerGrads {
  Tensor<Scalar> grad_input;
  std::map<std::string, Tensor<Scalar>> grad_params;
};

namespace detail {

struct ConvGeometry {
  Index channels, height, width;
  Index kernel_h, kernel_w;
  Index stride, padding;
  Index out_h, out_w;

  Index rows() const { return channels * kernel_h * kernel_w; }
  Index cols() const { return out_h * out_w; }
};

inline Index conv_out_extent(Index extent, Index kernel, Index stride, Index padding) {
  return (extent + 2 * padding - kernel) / stride + 1;
}

/// Unfolds one image (channels x height x width) into patch columns.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Scalar* image, const ConvGeometry& g) {
  RowMatrix<Scalar> cols(g.rows(), g.cols());
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* plane = image + c * g.height * g.width;
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        Scalar* row = cols.data() + ((c * g.kernel_h + ki) * g.kernel_w + kj) * g.cols();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride + ki - g.padding;
          Scalar* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + iy * g.width;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride + kj - g.padding;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters patch columns back, accumulating into `image`.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const ConvGeometry& g, Scalar* image) {
  for (Index c = 0; c < g.channels; ++c) {
    Scalar* plane = image + c * g.height * g.width;
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        const Scalar* row = cols.data() + ((c * g.kernel_h + ki) * g.kernel_w + kj) * g.cols();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride + ki - g.padding;
          if (iy < 0 || iy >= g.height) continue;
          const Scalar* src = row + oy * g.out_w;
          Scalar* dst = plane + iy * g.width;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride + kj - g.padding;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, Index stride,
                           Index padding) {
  require_rank4(input, "conv2d input");
  require_rank4(kernel, "conv2d kernel");
  if (stride <= 0) throw ShapeError("conv2d: stride must be positive");
  if (padding < 0) throw ShapeError("conv2d: padding must be non-negative");
  if (kernel.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.dims()) + " does not match input " +
                     shape_string(input.dims()));
  }
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), kernel.dim(2), kernel.dim(3),
                 stride, padding, 0, 0};
  if (input.dim(2) + 2 * padding < g.kernel_h || input.dim(3) + 2 * padding < g.kernel_w) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  g.out_h = conv_out_extent(g.height, g.kernel_h, stride, padding);
  g.out_w = conv_out_extent(g.width, g.kernel_w, stride, padding);
  return g;
}

template <typename Scalar>
typename Tensor<Scalar>::ConstMatrixMap kernel_matrix(const Tensor<Scalar>& kernel) {
  return typename Tensor<Scalar>::ConstMatrixMap(kernel.data(), kernel.dim(0),
                                                 kernel.size() / kernel.dim(0));
}

template <typename Scalar>
void check_bias(const Tensor<Scalar>& bias, Index channels, const char* what) {
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw ShapeError(std::string(what) + ": bias " + shape_string(bias.dims()) +
                     " does not match " + std::to_string(channels) + " channels");
  }
}

}  // namespace detail

/// 2-D cross-correlation with symmetric zero padding.
/// kernel: out_ch x in_ch x kh x kw, bias: out_ch.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                      const Tensor<Scalar>& bias, Index stride, Index padding) {
  const auto g = detail::conv_geometry(input, kernel, stride, padding);
  const Index out_ch = kernel.dim(0);
  detail::check_bias(bias, out_ch, "conv2d");
  const auto weights = detail::kernel_matrix(kernel);
  Tensor<Scalar> output({input.dim(0), out_ch, g.out_h, g.out_w});
  for (Index n = 0; n < input.dim(0); ++n) {
    const auto cols = detail::im2col(input.data() + input.offset(n, 0, 0, 0), g);
    auto out = output.item(n);
    out.noalias() = weights * cols;
    out.colwise() += bias.values();
  }
  return require_finite(output, "conv2d");
}

/// Gradients of conv2d; grad_params holds "kernel" and "bias".
template <typename Scalar>
LayerGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                   const Tensor<Scalar>& grad_output, Index stride,
                                   Index padding) {
  const auto g = detail::conv_geometry(input, kernel, stride, padding);
  const Index out_ch = kernel.dim(0);
  const Shape expected{input.dim(0), out_ch, g.out_h, g.out_w};
  if (grad_output.dims() != expected) {
    throw ShapeError("conv2d_backward: grad_output " + shape_string(grad_output.dims()) +
                     ", expected " + shape_string(expected));
  }
  const auto weights = detail::kernel_matrix(kernel);
  Tensor<Scalar> grad_input(input.dims());
  Tensor<Scalar> grad_kernel(kernel.dims());
  Tensor<Scalar> grad_bias({out_ch});
  typename Tensor<Scalar>::MatrixMap grad_weights(grad_kernel.data(), out_ch,
                                                  kernel.size() / out_ch);
  for (Index n = 0; n < input.dim(0); ++n) {
    const auto cols = detail::im2col(input.data() + input.offset(n, 0, 0, 0), g);
    const auto grad_out = grad_output.item(n);
    grad_weights.noalias() += grad_out * cols.transpose();
    grad_bias.values() += grad_out.rowwise().sum();
    RowMatrix<Scalar> grad_cols = weights.transpose() * grad_out;
    detail::col2im(grad_cols, g, grad_input.data() + grad_input.offset(n, 0, 0, 0));
  }
  LayerGrads<Scalar> grads;
  grads.grad_input = std::move(grad_input);
  grads.grad_params.emplace("kernel", std::move(grad_kernel));
  grads.grad_params.emplace("bias", std::move(grad_bias));
  return grads;
}

namespace detail {

template <typename Scalar>
ConvGeometry upconv_geometry(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                             Index stride) {
  require_rank4(input, "upconv2d input");
  require_rank4(kernel, "upconv2d kernel");
  if (stride <= 0) throw ShapeError("upconv2d: stride must be positive");
  if (kernel.dim(0) != input.dim(1)) {
    throw ShapeError("upconv2d: kernel " + shape_string(kernel.dims()) +
                     " does not match input " + shape_string(input.dims()));
  }
  // Geometry of the forward convolution this op is the adjoint of.
  const Index out_h = (input.dim(2) - 1) * stride + kernel.dim(2);
  const Index out_w = (input.dim(3) - 1) * stride + kernel.dim(3);
  return ConvGeometry{kernel.dim(1), out_h, out_w, kernel.dim(2), kernel.dim(3),
                      stride, 0, input.dim(2), input.dim(3)};
}

}  // namespace detail

/// Transposed convolution, the adjoint of conv2d with the same kernel and stride (no padding).
/// kernel: in_ch x out_ch x kh x kw; output extent (H-1)*stride + kh.
template <typename Scalar>
Tensor<Scalar> upconv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                        const Tensor<Scalar>& bias, Index stride) {
  const auto g = detail::upconv_geometry(input, kernel, stride);
  detail::check_bias(bias, g.channels, "upconv2d");
  const auto weights = detail::kernel_matrix(kernel);
  Tensor<Scalar> output({input.dim(0), g.channels, g.height, g.width});
  for (Index n = 0; n < input.dim(0); ++n) {
    RowMatrix<Scalar> cols = weights.transpose() * input.item(n);
    detail::col2im(cols, g, output.data() + output.offset(n, 0, 0, 0));
    output.item(n).colwise() += bias.values();
  }
  return require_finite(output, "upconv2d");
}

template <typename Scalar>
LayerGrads<Scalar> upconv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                     const Tensor<Scalar>& grad_output, Index stride) {
  const auto g = detail::upconv_geometry(input, kernel, stride);
  const Shape expected{input.dim(0), g.channels, g.height, g.width};
  if (grad_output.dims() != expected) {
    throw ShapeError("upconv2d_backward: grad_output " + shape_string(grad_output.dims()) +
                     ", expected " + shape_string(expected));
  }
  const auto weights = detail::kernel_matrix(kernel);
  const Index in_ch = kernel.dim(0);
  Tensor<Scalar> grad_input(input.dims());
  Tensor<Scalar> grad_kernel(kernel.dims());
  Tensor<Scalar> grad_bias({g.channels});
  typename Tensor<Scalar>::MatrixMap grad_weights(grad_kernel.data(), in_ch,
                                                  kernel.size() / in_ch);
  for (Index n = 0; n < input.dim(0); ++n) {
    const auto cols = detail::im2col(grad_output.data() + grad_output.offset(n, 0, 0, 0), g);
    grad_input.item(n).noalias() = weights * cols;
    grad_weights.noalias() += input.item(n) * cols.transpose();
    grad_bias.values() += grad_output.item(n).rowwise().sum();
  }
  LayerGrads<Scalar> grads;
  grads.grad_input = std::move(grad_input);
  grads.grad_params.emplace("kernel", std::move(grad_kernel));
  grads.grad_params.emplace("bias", std::move(grad_bias));
  return grads;
}

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> output;
  /// Flat input offset of the max for every output cell.
  std::vector<Index> argmax;
};

/// Non-overlapping max pooling; ties resolve to the first position in row-major order.
template <typename Scalar>
PoolResult<Scalar> maxpool2d(const Tensor<Scalar>& input, Index window) {
  require_rank4(input, "maxpool2d");
  if (window <= 0) throw ShapeError("maxpool2d: window must be positive");
  const Index h = input.dim(2), w = input.dim(3);
  if (h % window != 0 || w % window != 0) {
    throw ShapeError("maxpool2d: spatial dims " + shape_string(input.dims()) +
                     " not divisible by window " + std::to_string(window));
  }
  const Index oh = h / window, ow = w / window;
  PoolResult<Scalar> result{Tensor<Scalar>({input.dim(0), input.dim(1), oh, ow}), {}};
  result.argmax.resize(static_cast<std::size_t>(result.output.size()));
  Index out_index = 0;
  for (Index n = 0; n < input.dim(0); ++n) {
    for (Index c = 0; c < input.dim(1); ++c) {
      const Index base = input.offset(n, c, 0, 0);
      for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox, ++out_index) {
          Index best = base + oy * window * w + ox * window;
          for (Index dy = 0; dy < window; ++dy) {
            for (Index dx = 0; dx < window; ++dx) {
              const Index at = base + (oy * window + dy) * w + ox * window + dx;
              if (input[at] > input[best]) best = at;
            }
          }
          result.output[out_index] = input[best];
          result.argmax[static_cast<std::size_t>(out_index)] = best;
        }
      }
    }
  }
  return result;
}

template <typename Scalar>
Tensor<Scalar> maxpool2d_backward(const Shape& input_dims, const std::vector<Index>& argmax,
                                  const Tensor<Scalar>& grad_output) {
  if (static_cast<Index>(argmax.size()) != grad_output.size()) {
    throw ShapeError("maxpool2d_backward: argmax/grad_output size mismatch");
  }
  Tensor<Scalar> grad_input(input_dims);
  for (Index i = 0; i < grad_output.size(); ++i) {
    grad_input[argmax[static_cast<std::size_t>(i)]] += grad_output[i];
  }
  return grad_input;
}

/// Per-channel running statistics of a batch-norm layer.
template <typename Scalar>
struct BatchNormState {
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  std::int64_t num_batches = 0;

  BatchNormState() = default;
  explicit BatchNormState(Index channels)
      : running_mean({channels}), running_var(Tensor<Scalar>::constant({channels}, Scalar(1))) {}

  bool initialized() const { return num_batches > 0; }
};

/// Values saved by the forward pass for batchnorm2d_backward.
template <typename Scalar>
struct BatchNormCache {
  Mode mode = Mode::train;
  Tensor<Scalar> normalized;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
  Tensor<Scalar> gamma;
};

/// Batch normalization over batch x height x width per channel.
/// Train mode normalizes with the biased batch variance and folds the unbiased variance
/// into the running estimate when `update_stats` is set.
template <typename Scalar>
Tensor<Scalar> batchnorm2d(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma,
                           const Tensor<Scalar>& beta, BatchNormState<Scalar>& state, Mode mode,
                           Scalar momentum, Scalar eps, BatchNormCache<Scalar>* cache = nullptr,
                           bool update_stats = true) {
  require_rank4(input, "batchnorm2d");
  const Index batch = input.dim(0), channels = input.dim(1);
  const Index plane = input.dim(2) * input.dim(3);
  if (gamma.size() != channels || beta.size() != channels ||
      state.running_mean.size() != channels || state.running_var.size() != channels) {
    throw ShapeError("batchnorm2d: parameter length does not match " + std::to_string(channels) +
                     " channels");
  }
  if (!(eps > 0)) throw std::invalid_argument("batchnorm2d: eps must be positive");
  if (mode == Mode::eval && !state.initialized()) {
    throw std::logic_error("batchnorm2d: eval mode with uninitialized running stats");
  }

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean(channels), var(channels);
  if (mode == Mode::train) {
    const Index count = batch * plane;
    if (count < 2) throw ShapeError("batchnorm2d: train mode needs more than one value per channel");
    mean.setZero();
    var.setZero();
    for (Index n = 0; n < batch; ++n) mean += input.item(n).rowwise().sum();
    mean /= Scalar(count);
    for (Index n = 0; n < batch; ++n) {
      var += (input.item(n).colwise() - mean).rowwise().squaredNorm();
    }
    var /= Scalar(count);
    if (update_stats) {
      state.running_mean.values() = (Scalar(1) - momentum) * state.running_mean.values() + momentum * mean;
      state.running_var.values() = (Scalar(1) - momentum) * state.running_var.values() +
                                   momentum * var * (Scalar(count) / Scalar(count - 1));
      ++state.num_batches;
    }
  } else {
    mean = state.running_mean.values();
    var = state.running_var.values();
  }

  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std =
      (var.array() + eps).rsqrt().matrix();
  Tensor<Scalar> normalized(input.dims());
  Tensor<Scalar> output(input.dims());
  for (Index n = 0; n < batch; ++n) {
    auto xhat = normalized.item(n);
    xhat = (input.item(n).colwise() - mean);
    xhat = inv_std.asDiagonal() * xhat;
    auto out = output.item(n);
    out = gamma.values().asDiagonal() * xhat;
    out.colwise() += beta.values();
  }
  if (cache != nullptr) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
    cache->gamma = gamma;
  }
  return require_finite(output, "batchnorm2d");
}

/// Gradients of batchnorm2d; grad_params holds "gamma" and "beta".
template <typename Scalar>
LayerGrads<Scalar> batchnorm2d_backward(const BatchNormCache<Scalar>& cache,
                                        const Tensor<Scalar>& grad_output) {
  if (grad_output.dims() != cache.normalized.dims()) {
    throw ShapeError("batchnorm2d_backward: grad_output " + shape_string(grad_output.dims()) +
                     " vs " + shape_string(cache.normalized.dims()));
  }
  const Index batch = grad_output.dim(0), channels = grad_output.dim(1);
  const Index count = batch * grad_output.dim(2) * grad_output.dim(3);
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vec grad_gamma = Vec::Zero(channels), grad_beta = Vec::Zero(channels);
  for (Index n = 0; n < batch; ++n) {
    const auto g = grad_output.item(n);
    grad_beta += g.rowwise().sum();
    grad_gamma += g.cwiseProduct(cache.normalized.item(n)).rowwise().sum();
  }
  Tensor<Scalar> grad_input(grad_output.dims());
  const Vec scale = cache.gamma.values().cwiseProduct(cache.inv_std);
  for (Index n = 0; n < batch; ++n) {
    auto gi = grad_input.item(n);
    if (cache.mode == Mode::eval) {
      gi = scale.asDiagonal() * grad_output.item(n);
    } else {
      // dx = gamma * inv_std / M * (M*g - sum(g) - xhat * sum(g*xhat))
      gi = Scalar(count) * grad_output.item(n);
      gi.colwise() -= grad_beta;
      gi -= grad_gamma.asDiagonal() * cache.normalized.item(n);
      gi = (scale / Scalar(count)).asDiagonal() * gi;
    }
  }
  LayerGrads<Scalar> grads;
  grads.grad_input = std::move(grad_input);
  grads.grad_params.emplace("gamma", Tensor<Scalar>({channels}, grad_gamma));
  grads.grad_params.emplace("beta", Tensor<Scalar>({channels}, grad_beta));
  return grads;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input) {
  return Tensor<Scalar>(input.dims(), input.values().cwiseMax(Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_output) {
  if (input.dims() != grad_output.dims()) throw ShapeError("relu_backward: dims mismatch");
  return Tensor<Scalar>(input.dims(),
                        (input.values().array() > Scalar(0))
                            .select(grad_output.values(), Scalar(0))
                            .matrix());
}

/// Softmax over the channel axis at every pixel.
template <typename Scalar>
Tensor<Scalar> softmax_channels(const Tensor<Scalar>& logits) {
  require_rank4(logits, "softmax_channels");
  Tensor<Scalar> probs(logits.dims());
  for (Index n = 0; n < logits.dim(0); ++n) {
    auto p = probs.item(n);
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> peak = logits.item(n).colwise().maxCoeff();
    p = (logits.item(n).rowwise() - peak).array().exp().matrix();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> total = p.colwise().sum().array();
    p = (p.array().rowwise() / total).matrix();
  }
  return probs;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: " + shape_string(a.dims()) + " vs " +
                     shape_string(b.dims()));
  }
  Tensor<Scalar> out({a.dim(0), a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
  for (Index n = 0; n < a.dim(0); ++n) {
    out.item(n).topRows(a.dim(1)) = a.item(n);
    out.item(n).bottomRows(b.dim(1)) = b.item(n);
  }
  return out;
}

/// Inverse of concat_channels: the first `split` channels and the rest.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_channels(const Tensor<Scalar>& t, Index split) {
  require_rank4(t, "split_channels");
  if (split <= 0 || split >= t.dim(1)) throw ShapeError("split_channels: bad split point");
  Tensor<Scalar> a({t.dim(0), split, t.dim(2), t.dim(3)});
  Tensor<Scalar> b({t.dim(0), t.dim(1) - split, t.dim(2), t.dim(3)});
  for (Index n = 0; n < t.dim(0); ++n) {
    a.item(n) = t.item(n).topRows(split);
    b.item(n) = t.item(n).bottomRows(t.dim(1) - split);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace useg

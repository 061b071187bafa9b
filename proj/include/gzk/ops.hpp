#pragma once

// Differentiable primitives. Image tensors are NCHW; vector batches are N x F.
// Every op validates shapes eagerly and throws ShapeError naming the shapes.

#include <span>
#include <vector>

#include "gzk/tensor.hpp"

namespace gzk::ops {

enum class PoolMode { max, avg };
enum class BatchNormMode { train, eval };

/// Per-channel running statistics, updated in train mode as
/// running = momentum * running + (1 - momentum) * batch (unbiased variance).
template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;

  static RunningStats make(Index channels) {
    return {Tensor<T>::zeros({channels}), Tensor<T>::full({channels}, T(1))};
  }
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kDefaultSoftArgmaxTemperature = 17.0;

/// Cross-correlation of x [N,I,H,W] with kernel [O,I,K,K].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, Index stride = 1, Index padding = 0);

/// Adds a per-channel bias b [C] to x [N,C,...].
template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b);

/// Non-overlapping pooling; H and W must be multiples of the window.
template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, PoolMode mode, Index window = 2, Index stride = 2);

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, Index factor = 2);

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormMode mode,
                     RunningStats<T>& stats, bool fuse_relu = false);

/// BatchNorm followed by ReLU in one pass; same gradient as the composition.
template <typename T>
Tensor<T> batch_norm_relu(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormMode mode,
                          RunningStats<T>& stats) {
  return batch_norm(x, gamma, beta, mode, stats, true);
}

/// x [N,F] * weight [F,G] + bias [G].
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Softmax over all pixels of each trailing H x W map (scaled by the
/// temperature), then the expected pixel coordinate. Output has the leading
/// dims of the input plus a trailing (u, v) pair: u is the column, v the row,
/// both measured from the centre of pixel (0, 0).
template <typename T>
Tensor<T> soft_argmax(const Tensor<T>& heatmaps, T temperature = T(kDefaultSoftArgmaxTemperature));

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> square(const Tensor<T>& x);
/// log(x + eps)
template <typename T>
Tensor<T> log(const Tensor<T>& x, T eps = T(0));
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);
/// Softmax across dim 1 for every other index.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(std::initializer_list<Tensor<T>> parts) {
  std::vector<Tensor<T>> v(parts);
  return concat_channels(std::span<const Tensor<T>>(v));
}

}  // namespace gzk::ops

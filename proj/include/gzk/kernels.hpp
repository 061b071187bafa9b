#pragma once

// Raw NCHW compute kernels behind the differentiable ops.
//
// Each kernel parallelizes over independent outputs (samples, channels or
// planes) with OpenMP. Reductions across the batch are computed per sample
// and summed in sample order, so results do not depend on the thread count.
// Backward kernels accumulate into their gradient outputs.

#include <cstdint>
#include <span>

#include "gzk/tensor.hpp"

namespace gzk::kernels {

/// Applies GZK_THREADS (if set) to OpenMP and pins Eigen to one thread.
void configure_threads_from_env();
void set_num_threads(int n);
int num_threads();

/// Keeps freed activation buffers in the heap instead of returning them to
/// the OS; every op allocates multi-megabyte outputs, and fresh pages fault.
void tune_allocator();

struct ConvDims {
  Index n = 0, c_in = 0, h = 0, w = 0;
  Index c_out = 0, k = 0, stride = 1, pad = 0;
  Index h_out = 0, w_out = 0;

  static ConvDims make(Index n, Index c_in, Index h, Index w, Index c_out, Index k, Index stride,
                       Index pad);
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void conv2d_forward(const ConvDims& d, const T* x, const T* weight, T* y);

/// gx and gw may be null when the corresponding gradient is not needed.
template <typename T>
void conv2d_backward(const ConvDims& d, const T* x, const T* weight, const T* gy, T* gx, T* gw);

struct PoolDims {
  Index n = 0, c = 0, h = 0, w = 0, window = 2, stride = 2, h_out = 0, w_out = 0;
  static PoolDims make(Index n, Index c, Index h, Index w, Index window, Index stride);
};

template <typename T>
void max_pool_forward(const PoolDims& d, const T* x, T* y, std::int32_t* argmax);
template <typename T>
void max_pool_backward(const PoolDims& d, const std::int32_t* argmax, const T* gy, T* gx);
template <typename T>
void avg_pool_forward(const PoolDims& d, const T* x, T* y);
template <typename T>
void avg_pool_backward(const PoolDims& d, const T* gy, T* gx);

/// Corner-aligned bilinear upsampling by an integer factor.
/// Output pixel o samples source coordinate o * (S - 1) / (S_out - 1) per axis.
template <typename T>
void upsample_bilinear_forward(Index planes, Index h, Index w, Index factor, const T* x, T* y);
template <typename T>
void upsample_bilinear_backward(Index planes, Index h, Index w, Index factor, const T* gy, T* gx);

/// Batch normalization over (n, hw) per channel. `inner` is H*W for NCHW
/// inputs and 1 for N x F inputs. mean/invstd receive per-channel batch
/// statistics (train) or the running statistics used (eval).
struct NormDims {
  Index n = 0, c = 0, inner = 1;
};

template <typename T>
void batch_norm_forward(const NormDims& d, const T* x, const T* gamma, const T* beta, bool train,
                        const T* running_mean, const T* running_var, T eps, bool fuse_relu, T* y,
                        T* mean, T* invstd);

/// y is the forward output (used to mask the fused ReLU); pass null when no
/// ReLU was fused. Any of gx/ggamma/gbeta may be null.
template <typename T>
void batch_norm_backward(const NormDims& d, const T* x, const T* y, const T* gamma, const T* mean,
                         const T* invstd, bool train, const T* gy, T* gx, T* ggamma, T* gbeta);

/// Row-major y[n, g] = x[n, f] * w[f, g] (+ bias when non-null).
template <typename T>
void matmul(Index n, Index f, Index g, const T* x, const T* w, const T* bias, T* y);
/// gx += gy * w^T ; gw += x^T * gy ; gb += column sums of gy. Nulls skip.
template <typename T>
void matmul_backward(Index n, Index f, Index g, const T* x, const T* w, const T* gy, T* gx, T* gw,
                     T* gb);

}  // namespace gzk::kernels

#pragma once

// Serial, loop-nest implementations of the compute kernels. They share no
// code with gzk::kernels and exist to check and benchmark it.

#include <vector>

#include "gzk/tensor.hpp"

namespace gzk::reference {

/// Direct six-nested-loop cross-correlation. x is NCHW, w is OIKK.
template <typename T>
std::vector<T> conv2d(const std::vector<T>& x, const Shape& x_shape, const std::vector<T>& w, const Shape& w_shape,
                      Index stride, Index pad);

/// Non-overlapping window pooling over NCHW input.
template <typename T>
std::vector<T> max_pool(const std::vector<T>& x, const Shape& x_shape, Index window);
template <typename T>
std::vector<T> avg_pool(const std::vector<T>& x, const Shape& x_shape, Index window);

/// y[n][g] = sum_f x[n][f] * w[f][g] + b[g]
template <typename T>
std::vector<T> fully_connected(const std::vector<T>& x, Index n, Index f, const std::vector<T>& w, Index g,
                               const std::vector<T>& b);

/// Corner-aligned bilinear interpolation evaluated per output pixel from the
/// closed form; factor is the integer upsampling ratio.
template <typename T>
std::vector<T> upsample_bilinear(const std::vector<T>& x, const Shape& x_shape, Index factor);

}  // namespace gzk::reference

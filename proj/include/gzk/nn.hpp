#pragma once

// Layers with named parameters and buffers. Visiting order is the
// construction order and fixes checkpoint layout and initialization streams.

#include <functional>
#include <memory>
#include <string>

#include "gzk/ops.hpp"
#include "gzk/random.hpp"

namespace gzk::nn {

enum class Mode { train, eval };
enum class Role { parameter, buffer };

template <typename T>
using Visitor = std::function<void(const std::string& name, Tensor<T>& tensor, Role role)>;

inline std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// He-uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
template <typename T>
Tensor<T> he_uniform(Shape shape, Index fan_in, Rng& rng);

/// Convolution with "same" padding for odd kernels. Layers feeding a batch
/// norm carry no bias.
template <typename T>
struct Conv2d {
  Tensor<T> weight;
  Tensor<T> bias;  // undefined when absent
  Index stride = 1;
  Index padding = 0;

  Conv2d() = default;
  Conv2d(Index in, Index out, Index kernel, bool with_bias, Rng& rng, Index stride = 1);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const Visitor<T>& v);
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  ops::RunningStats<T> stats;

  BatchNorm() = default;
  explicit BatchNorm(Index channels);
  Tensor<T> operator()(const Tensor<T>& x, Mode mode, bool relu = true);
  void visit(const std::string& prefix, const Visitor<T>& v);
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;

  Linear() = default;
  Linear(Index in, Index out, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const Visitor<T>& v);
};

/// Pre-activation bottleneck: BN-ReLU-1x1 (C/2), BN-ReLU-3x3 (C/2),
/// BN-ReLU-1x1 (C), plus identity.
template <typename T>
struct Residual {
  BatchNorm<T> bn1, bn2, bn3;
  Conv2d<T> conv1, conv2, conv3;

  Residual() = default;
  Residual(Index channels, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, Mode mode);
  void visit(const std::string& prefix, const Visitor<T>& v);
};

/// Recursive encoder-decoder over `depth` halvings; shape preserving.
template <typename T>
struct Hourglass {
  int depth = 0;
  Residual<T> up1, low1, low3;
  Residual<T> bottom;                  // depth == 1 only
  std::unique_ptr<Hourglass<T>> inner;  // depth > 1 only

  Hourglass() = default;
  Hourglass(int depth, Index channels, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, Mode mode);
  void visit(const std::string& prefix, const Visitor<T>& v);
};

/// Each layer: BN-ReLU-1x1 (4g), BN-ReLU-3x3 (g), concatenated onto the input.
template <typename T>
struct DenseBlock {
  struct Layer {
    BatchNorm<T> bn1, bn2;
    Conv2d<T> conv1, conv2;
  };
  std::vector<Layer> layers;
  Index out_channels = 0;

  DenseBlock() = default;
  DenseBlock(Index in_channels, int n_layers, Index growth, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, Mode mode);
  void visit(const std::string& prefix, const Visitor<T>& v);
};

/// BN-ReLU-1x1 to ceil(C/2) channels, then 2x2 average pooling.
template <typename T>
struct Transition {
  BatchNorm<T> bn;
  Conv2d<T> conv;
  Index out_channels = 0;

  Transition() = default;
  Transition(Index in_channels, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, Mode mode);
  void visit(const std::string& prefix, const Visitor<T>& v);
};

/// Number of scalar parameters (excluding buffers) reachable from a visit.
template <typename T, typename M>
Index count_parameters(M&& module) {
  Index n = 0;
  const Visitor<T> v = [&](const std::string&, Tensor<T>& t, Role role) {
    if (role == Role::parameter) n += t.numel();
  };
  if constexpr (requires { module.visit(v); })
    module.visit(v);
  else
    module.visit("", v);
  return n;
}

}  // namespace gzk::nn

#include <cmath>
#include <stdexcept>

#include "gzk/nn.hpp"

namespace gzk::nn {

template <typename T>
Tensor<T> he_uniform(Shape shape, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (T& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from(std::move(shape), std::move(data), true);
}

template <typename T>
Conv2d<T>::Conv2d(Index in, Index out, Index kernel, bool with_bias, Rng& rng, Index stride)
    : stride(stride), padding(kernel / 2) {
  weight = he_uniform<T>({out, in, kernel, kernel}, in * kernel * kernel, rng);
  if (with_bias) bias = Tensor<T>::zeros({out}, true);
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> y = ops::conv2d(x, weight, stride, padding);
  return bias.defined() ? ops::bias_add(y, bias) : y;
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, const Visitor<T>& v) {
  v(join(prefix, "weight"), weight, Role::parameter);
  if (bias.defined()) v(join(prefix, "bias"), bias, Role::parameter);
}

template <typename T>
BatchNorm<T>::BatchNorm(Index channels)
    : gamma(Tensor<T>::full({channels}, T(1), true)),
      beta(Tensor<T>::zeros({channels}, true)),
      stats(ops::RunningStats<T>::make(channels)) {}

template <typename T>
Tensor<T> BatchNorm<T>::operator()(const Tensor<T>& x, Mode mode, bool relu) {
  const auto m = mode == Mode::train ? ops::BatchNormMode::train : ops::BatchNormMode::eval;
  return ops::batch_norm(x, gamma, beta, m, stats, relu);
}

template <typename T>
void BatchNorm<T>::visit(const std::string& prefix, const Visitor<T>& v) {
  v(join(prefix, "gamma"), gamma, Role::parameter);
  v(join(prefix, "beta"), beta, Role::parameter);
  v(join(prefix, "running_mean"), stats.mean, Role::buffer);
  v(join(prefix, "running_var"), stats.var, Role::buffer);
}

template <typename T>
Linear<T>::Linear(Index in, Index out, Rng& rng)
    : weight(he_uniform<T>({in, out}, in, rng)), bias(Tensor<T>::zeros({out}, true)) {}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return ops::fully_connected(x, weight, bias);
}

template <typename T>
void Linear<T>::visit(const std::string& prefix, const Visitor<T>& v) {
  v(join(prefix, "weight"), weight, Role::parameter);
  v(join(prefix, "bias"), bias, Role::parameter);
}

template <typename T>
Residual<T>::Residual(Index channels, Rng& rng) {
  if (channels < 2 || channels % 2 != 0)
    throw ShapeError("residual block needs an even channel count, got " + std::to_string(channels));
  const Index half = channels / 2;
  bn1 = BatchNorm<T>(channels);
  conv1 = Conv2d<T>(channels, half, 1, false, rng);
  bn2 = BatchNorm<T>(half);
  conv2 = Conv2d<T>(half, half, 3, false, rng);
  bn3 = BatchNorm<T>(half);
  conv3 = Conv2d<T>(half, channels, 1, true, rng);
}

template <typename T>
Tensor<T> Residual<T>::operator()(const Tensor<T>& x, Mode mode) {
  Tensor<T> y = conv1(bn1(x, mode));
  y = conv2(bn2(y, mode));
  y = conv3(bn3(y, mode));
  return ops::add(x, y);
}

template <typename T>
void Residual<T>::visit(const std::string& prefix, const Visitor<T>& v) {
  bn1.visit(join(prefix, "bn1"), v);
  conv1.visit(join(prefix, "conv1"), v);
  bn2.visit(join(prefix, "bn2"), v);
  conv2.visit(join(prefix, "conv2"), v);
  bn3.visit(join(prefix, "bn3"), v);
  conv3.visit(join(prefix, "conv3"), v);
}

template <typename T>
Hourglass<T>::Hourglass(int depth, Index channels, Rng& rng) : depth(depth) {
  if (depth < 1) throw std::invalid_argument("hourglass depth must be at least 1");
  up1 = Residual<T>(channels, rng);
  low1 = Residual<T>(channels, rng);
  if (depth > 1)
    inner = std::make_unique<Hourglass<T>>(depth - 1, channels, rng);
  else
    bottom = Residual<T>(channels, rng);
  low3 = Residual<T>(channels, rng);
}

template <typename T>
Tensor<T> Hourglass<T>::operator()(const Tensor<T>& x, Mode mode) {
  const Index step = Index{1} << depth;
  if (x.rank() != 4 || x.dim(2) % step != 0 || x.dim(3) % step != 0)
    throw ShapeError("hourglass of depth " + std::to_string(depth) + " needs H and W divisible by " +
                     std::to_string(step) + ", got " + to_string(x.shape()));
  Tensor<T> skip = up1(x, mode);
  Tensor<T> low = low1(ops::pool2d(x, ops::PoolMode::max), mode);
  low = inner ? (*inner)(low, mode) : bottom(low, mode);
  low = low3(low, mode);
  return ops::add(skip, ops::upsample_bilinear(low, 2));
}

template <typename T>
void Hourglass<T>::visit(const std::string& prefix, const Visitor<T>& v) {
  up1.visit(join(prefix, "up1"), v);
  low1.visit(join(prefix, "low1"), v);
  if (inner)
    inner->visit(join(prefix, "inner"), v);
  else
    bottom.visit(join(prefix, "bottom"), v);
  low3.visit(join(prefix, "low3"), v);
}

template <typename T>
DenseBlock<T>::DenseBlock(Index in_channels, int n_layers, Index growth, Rng& rng) {
  if (n_layers < 1 || growth < 1) throw std::invalid_argument("dense block needs positive layers and growth");
  Index c = in_channels;
  for (int i = 0; i < n_layers; ++i) {
    Layer layer;
    layer.bn1 = BatchNorm<T>(c);
    layer.conv1 = Conv2d<T>(c, 4 * growth, 1, false, rng);
    layer.bn2 = BatchNorm<T>(4 * growth);
    layer.conv2 = Conv2d<T>(4 * growth, growth, 3, false, rng);
    layers.push_back(std::move(layer));
    c += growth;
  }
  out_channels = c;
}

template <typename T>
Tensor<T> DenseBlock<T>::operator()(const Tensor<T>& x, Mode mode) {
  Tensor<T> features = x;
  for (Layer& layer : layers) {
    Tensor<T> y = layer.conv1(layer.bn1(features, mode));
    y = layer.conv2(layer.bn2(y, mode));
    features = ops::concat_channels({features, y});
  }
  return features;
}

template <typename T>
void DenseBlock<T>::visit(const std::string& prefix, const Visitor<T>& v) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = join(prefix, "layer" + std::to_string(i));
    layers[i].bn1.visit(join(p, "bn1"), v);
    layers[i].conv1.visit(join(p, "conv1"), v);
    layers[i].bn2.visit(join(p, "bn2"), v);
    layers[i].conv2.visit(join(p, "conv2"), v);
  }
}

template <typename T>
Transition<T>::Transition(Index in_channels, Rng& rng)
    : bn(in_channels), conv(in_channels, (in_channels + 1) / 2, 1, false, rng), out_channels((in_channels + 1) / 2) {}

template <typename T>
Tensor<T> Transition<T>::operator()(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    throw ShapeError("transition layer needs even spatial dims, got " + to_string(x.shape()));
  return ops::pool2d(conv(bn(x, mode)), ops::PoolMode::avg);
}

template <typename T>
void Transition<T>::visit(const std::string& prefix, const Visitor<T>& v) {
  bn.visit(join(prefix, "bn"), v);
  conv.visit(join(prefix, "conv"), v);
}

#define GZK_INSTANTIATE(T)                                           \
  template Tensor<T> he_uniform<T>(Shape, Index, Rng&);              \
  template struct Conv2d<T>;                                         \
  template struct BatchNorm<T>;                                      \
  template struct Linear<T>;                                         \
  template struct Residual<T>;                                       \
  template struct Hourglass<T>;                                      \
  template struct DenseBlock<T>;                                     \
  template struct Transition<T>;

GZK_INSTANTIATE(float)
GZK_INSTANTIATE(double)

}  // namespace gzk::nn

#include "gzk/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gzk/kernels.hpp"

namespace gzk::ops {

namespace {

template <typename T>
using Handles = std::vector<std::shared_ptr<TensorImpl<T>>>;

template <typename T>
Handles<T> handles(std::initializer_list<const Tensor<T>*> ts) {
  Handles<T> h;
  for (const Tensor<T>* t : ts) h.push_back(t ? t->handle() : nullptr);
  return h;
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b, const char* what) {
  throw ShapeError(std::string(op) + ": " + what + " (" + to_string(a) + " vs " + to_string(b) + ")");
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
}

template <typename T>
void check_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch(op, a.shape(), b.shape(), "shapes differ");
}

template <typename T>
using Acc = std::conditional_t<std::is_same_v<T, float>, double, T>;

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, Index stride, Index padding) {
  require_rank("conv2d", x.shape(), 4);
  require_rank("conv2d", kernel.shape(), 4);
  if (kernel.dim(1) != x.dim(1)) mismatch("conv2d", x.shape(), kernel.shape(), "input channels differ from kernel");
  if (kernel.dim(2) != kernel.dim(3)) mismatch("conv2d", x.shape(), kernel.shape(), "kernel must be square");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be positive and padding non-negative");
  const Index span_h = x.dim(2) + 2 * padding - kernel.dim(2);
  const Index span_w = x.dim(3) + 2 * padding - kernel.dim(3);
  if (span_h < 0 || span_w < 0) mismatch("conv2d", x.shape(), kernel.shape(), "kernel larger than padded input");
  const auto d = kernels::ConvDims::make(x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel.dim(0), kernel.dim(2),
                                         stride, padding);
  std::vector<T> y(static_cast<std::size_t>(d.n * d.c_out * d.h_out * d.w_out));
  kernels::conv2d_forward(d, x.data().data(), kernel.data().data(), y.data());
  return make_result<T>({d.n, d.c_out, d.h_out, d.w_out}, std::move(y), "conv2d", handles<T>({&x, &kernel}),
                        [d](Node<T>& node, std::span<const T> gy) {
                          T* gx = node.needs(0) ? node.grad_of(0).data() : nullptr;
                          T* gw = node.needs(1) ? node.grad_of(1).data() : nullptr;
                          kernels::conv2d_backward(d, node.data_of(0).data(), node.data_of(1).data(), gy.data(),
                                                   gx, gw);
                        });
}

template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() < 2) throw ShapeError("bias_add: expected rank >= 2, got " + to_string(x.shape()));
  require_rank("bias_add", b.shape(), 1);
  if (b.dim(0) != x.dim(1)) mismatch("bias_add", x.shape(), b.shape(), "bias length differs from channels");
  const Index n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  std::vector<T> y(x.data().begin(), x.data().end());
  const auto bd = b.data();
  for (Index s = 0; s < n; ++s)
    for (Index ch = 0; ch < c; ++ch) {
      T* p = y.data() + (s * c + ch) * inner;
      for (Index i = 0; i < inner; ++i) p[i] += bd[ch];
    }
  return make_result<T>(x.shape(), std::move(y), "bias_add", handles<T>({&x, &b}),
                        [n, c, inner](Node<T>& node, std::span<const T> gy) {
                          if (node.needs(0)) {
                            auto gx = node.grad_of(0);
                            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
                          }
                          if (node.needs(1)) {
                            auto gb = node.grad_of(1);
                            // per-position partial sums keep the inner loop vectorizable
                            std::vector<Acc<T>> lane(static_cast<std::size_t>(inner));
                            for (Index ch = 0; ch < c; ++ch) {
                              std::fill(lane.begin(), lane.end(), Acc<T>(0));
                              for (Index s = 0; s < n; ++s) {
                                const T* p = gy.data() + (s * c + ch) * inner;
                                for (Index i = 0; i < inner; ++i) lane[static_cast<std::size_t>(i)] += p[i];
                              }
                              Acc<T> acc = 0;
                              for (Acc<T> v : lane) acc += v;
                              gb[ch] += static_cast<T>(acc);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, PoolMode mode, Index window, Index stride) {
  require_rank("pool2d", x.shape(), 4);
  if (window < 1 || stride != window) throw ShapeError("pool2d: only non-overlapping windows are supported");
  if (x.dim(2) % window != 0 || x.dim(3) % window != 0)
    throw ShapeError("pool2d: spatial extent of " + to_string(x.shape()) + " not divisible by window " +
                     std::to_string(window));
  const auto d = kernels::PoolDims::make(x.dim(0), x.dim(1), x.dim(2), x.dim(3), window, stride);
  std::vector<T> y(static_cast<std::size_t>(d.n * d.c * d.h_out * d.w_out));
  const Shape out_shape{d.n, d.c, d.h_out, d.w_out};
  if (mode == PoolMode::max) {
    std::vector<std::int32_t> argmax(y.size());
    kernels::max_pool_forward(d, x.data().data(), y.data(), argmax.data());
    return make_result<T>(out_shape, std::move(y), "max_pool2d", handles<T>({&x}),
                          [d, argmax = std::move(argmax)](Node<T>& node, std::span<const T> gy) {
                            kernels::max_pool_backward(d, argmax.data(), gy.data(), node.grad_of(0).data());
                          });
  }
  kernels::avg_pool_forward(d, x.data().data(), y.data());
  return make_result<T>(out_shape, std::move(y), "avg_pool2d", handles<T>({&x}),
                        [d](Node<T>& node, std::span<const T> gy) {
                          kernels::avg_pool_backward(d, gy.data(), node.grad_of(0).data());
                        });
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, Index factor) {
  require_rank("upsample_bilinear", x.shape(), 4);
  if (factor < 1) throw ShapeError("upsample_bilinear: factor must be positive");
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> y(static_cast<std::size_t>(planes * h * w * factor * factor));
  kernels::upsample_bilinear_forward(planes, h, w, factor, x.data().data(), y.data());
  return make_result<T>({x.dim(0), x.dim(1), h * factor, w * factor}, std::move(y), "upsample_bilinear",
                        handles<T>({&x}), [planes, h, w, factor](Node<T>& node, std::span<const T> gy) {
                          kernels::upsample_bilinear_backward(planes, h, w, factor, gy.data(),
                                                              node.grad_of(0).data());
                        });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormMode mode,
                     RunningStats<T>& stats, bool fuse_relu) {
  if (x.rank() != 2 && x.rank() != 4)
    throw ShapeError("batch_norm: expected [N,F] or [N,C,H,W], got " + to_string(x.shape()));
  const Index c = x.dim(1);
  for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &stats.mean, &stats.var})
    if (p->rank() != 1 || p->dim(0) != c) mismatch("batch_norm", x.shape(), p->shape(), "parameter extent differs from channels");
  if (x.dim(0) < 1) throw ShapeError("batch_norm: empty batch");
  kernels::NormDims d{x.dim(0), c, x.numel() / (x.dim(0) * c)};
  const bool train = mode == BatchNormMode::train;
  std::vector<T> y(x.data().size()), mean(c), invstd(c);
  kernels::batch_norm_forward(d, x.data().data(), gamma.data().data(), beta.data().data(), train,
                              stats.mean.data().data(), stats.var.data().data(), T(kBatchNormEps), fuse_relu,
                              y.data(), mean.data(), invstd.data());
  if (train) {
    const T m = T(kBatchNormMomentum);
    const Index count = d.n * d.inner;
    const T unbias = count > 1 ? static_cast<T>(count) / static_cast<T>(count - 1) : T(1);
    auto rm = stats.mean.mutable_data();
    auto rv = stats.var.mutable_data();
    for (Index ch = 0; ch < c; ++ch) {
      const T var = T(1) / (invstd[ch] * invstd[ch]) - T(kBatchNormEps);
      rm[ch] = m * rm[ch] + (T(1) - m) * mean[ch];
      rv[ch] = m * rv[ch] + (T(1) - m) * std::max(T(0), var) * unbias;
    }
  }
  return make_result<T>(
      x.shape(), std::move(y), fuse_relu ? "batch_norm_relu" : "batch_norm", handles<T>({&x, &gamma, &beta}),
      [d, train, fuse_relu, mean = std::move(mean), invstd = std::move(invstd)](Node<T>& node, std::span<const T> gy) {
        auto out = node.output.lock();
        const T* y_data = fuse_relu && out ? out->data.data() : nullptr;
        kernels::batch_norm_backward(d, node.data_of(0).data(), y_data, node.data_of(1).data(), mean.data(),
                                     invstd.data(), train, gy.data(),
                                     node.needs(0) ? node.grad_of(0).data() : nullptr,
                                     node.needs(1) ? node.grad_of(1).data() : nullptr,
                                     node.needs(2) ? node.grad_of(2).data() : nullptr);
      });
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("fully_connected", x.shape(), 2);
  require_rank("fully_connected", weight.shape(), 2);
  require_rank("fully_connected", bias.shape(), 1);
  if (x.dim(1) != weight.dim(0)) mismatch("fully_connected", x.shape(), weight.shape(), "inner extents differ");
  if (bias.dim(0) != weight.dim(1)) mismatch("fully_connected", weight.shape(), bias.shape(), "bias length differs");
  const Index n = x.dim(0), f = x.dim(1), g = weight.dim(1);
  std::vector<T> y(static_cast<std::size_t>(n * g));
  kernels::matmul(n, f, g, x.data().data(), weight.data().data(), bias.data().data(), y.data());
  return make_result<T>({n, g}, std::move(y), "fully_connected", handles<T>({&x, &weight, &bias}),
                        [n, f, g](Node<T>& node, std::span<const T> gy) {
                          kernels::matmul_backward(n, f, g, node.data_of(0).data(), node.data_of(1).data(),
                                                   gy.data(), node.needs(0) ? node.grad_of(0).data() : nullptr,
                                                   node.needs(1) ? node.grad_of(1).data() : nullptr,
                                                   node.needs(2) ? node.grad_of(2).data() : nullptr);
                        });
}

template <typename T>
Tensor<T> soft_argmax(const Tensor<T>& heatmaps, T temperature) {
  if (heatmaps.rank() < 2) throw ShapeError("soft_argmax: expected [..., H, W], got " + to_string(heatmaps.shape()));
  const Shape& s = heatmaps.shape();
  const Index h = s[s.size() - 2], w = s[s.size() - 1];
  const Index maps = heatmaps.numel() / (h * w);
  Shape out_shape(s.begin(), s.end() - 2);
  out_shape.push_back(2);
  std::vector<T> y(static_cast<std::size_t>(maps * 2));
  // Normalized softmax weights are kept for the backward pass.
  std::vector<T> prob(heatmaps.data().size());
  const auto hd = heatmaps.data();
#pragma omp parallel for schedule(static)
  for (Index m = 0; m < maps; ++m) {
    const T* src = hd.data() + m * h * w;
    T* p = prob.data() + m * h * w;
    const T peak = *std::max_element(src, src + h * w);
    Acc<T> z = 0;
    for (Index i = 0; i < h * w; ++i) {
      p[i] = std::exp(temperature * (src[i] - peak));
      z += p[i];
    }
    Acc<T> u = 0, v = 0;
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) {
        const T q = static_cast<T>(p[r * w + c] / z);
        p[r * w + c] = q;
        u += static_cast<Acc<T>>(q) * c;
        v += static_cast<Acc<T>>(q) * r;
      }
    y[m * 2] = static_cast<T>(u);
    y[m * 2 + 1] = static_cast<T>(v);
  }
  std::vector<T> coords = y;
  return make_result<T>(std::move(out_shape), std::move(y), "soft_argmax", handles<T>({&heatmaps}),
                        [maps, h, w, temperature, prob = std::move(prob), coords = std::move(coords)](
                            Node<T>& node, std::span<const T> gy) {
                          auto gx = node.grad_of(0);
#pragma omp parallel for schedule(static)
                          for (Index m = 0; m < maps; ++m) {
                            const T gu = gy[m * 2], gv = gy[m * 2 + 1];
                            const T u = coords[m * 2], v = coords[m * 2 + 1];
                            const T* p = prob.data() + m * h * w;
                            T* g = gx.data() + m * h * w;
                            for (Index r = 0; r < h; ++r)
                              for (Index c = 0; c < w; ++c)
                                g[r * w + c] += temperature * p[r * w + c] *
                                                (gu * (static_cast<T>(c) - u) + gv * (static_cast<T>(r) - v));
                          }
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> y(x.data().size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xd[i] > T(0) ? xd[i] : T(0);
  return make_result<T>(x.shape(), std::move(y), "relu", handles<T>({&x}), [](Node<T>& node, std::span<const T> gy) {
    auto gx = node.grad_of(0);
    const auto xd = node.data_of(0);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xd[i] > T(0)) gx[i] += gy[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> y(x.data().size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-xd[i]));
  return make_result<T>(x.shape(), std::move(y), "sigmoid", handles<T>({&x}), [](Node<T>& node, std::span<const T> gy) {
    auto out = node.output.lock();
    auto gx = node.grad_of(0);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const T s = out->data[i];
      gx[i] += gy[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same("add", a, b);
  std::vector<T> y(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bd[i];
  return make_result<T>(a.shape(), std::move(y), "add", handles<T>({&a, &b}), [](Node<T>& node, std::span<const T> gy) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!node.needs(k)) continue;
      auto g = node.grad_of(k);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same("sub", a, b);
  std::vector<T> y(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bd[i];
  return make_result<T>(a.shape(), std::move(y), "sub", handles<T>({&a, &b}), [](Node<T>& node, std::span<const T> gy) {
    if (node.needs(0)) {
      auto g = node.grad_of(0);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
    if (node.needs(1)) {
      auto g = node.grad_of(1);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] -= gy[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same("mul", a, b);
  std::vector<T> y(a.data().size());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] * bd[i];
  return make_result<T>(a.shape(), std::move(y), "mul", handles<T>({&a, &b}), [](Node<T>& node, std::span<const T> gy) {
    if (node.needs(0)) {
      auto g = node.grad_of(0);
      const auto other = node.data_of(1);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * other[i];
    }
    if (node.needs(1)) {
      auto g = node.grad_of(1);
      const auto other = node.data_of(0);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * other[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> y(x.data().begin(), x.data().end());
  for (T& v : y) v *= factor;
  return make_result<T>(x.shape(), std::move(y), "scale", handles<T>({&x}),
                        [factor](Node<T>& node, std::span<const T> gy) {
                          auto g = node.grad_of(0);
                          for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * factor;
                        });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  std::vector<T> y(x.data().size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xd[i] * xd[i];
  return make_result<T>(x.shape(), std::move(y), "square", handles<T>({&x}), [](Node<T>& node, std::span<const T> gy) {
    auto g = node.grad_of(0);
    const auto xd = node.data_of(0);
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += T(2) * xd[i] * gy[i];
  });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x, T eps) {
  std::vector<T> y(x.data().size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(xd[i] + eps);
  return make_result<T>(x.shape(), std::move(y), "log", handles<T>({&x}), [eps](Node<T>& node, std::span<const T> gy) {
    auto g = node.grad_of(0);
    const auto xd = node.data_of(0);
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] / (xd[i] + eps);
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Acc<T> s = 0;
  for (T v : x.data()) s += v;
  return make_result<T>({1}, {static_cast<T>(s)}, "sum", handles<T>({&x}), [](Node<T>& node, std::span<const T> gy) {
    auto g = node.grad_of(0);
    for (T& v : g) v += gy[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  if (first.size() < 2) throw ShapeError("concat_channels: expected rank >= 2, got " + to_string(first));
  const Index n = first[0];
  const Index inner = parts[0].numel() / (n * first[1]);
  Index channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size() && s[0] == n;
    for (std::size_t a = 2; ok && a < s.size(); ++a) ok = s[a] == first[a];
    if (!ok) mismatch("concat_channels", first, s, "non-channel extents differ");
    channels += s[1];
  }
  Shape out_shape = first;
  out_shape[1] = channels;
  std::vector<T> y(static_cast<std::size_t>(n * channels * inner));
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    const Index c = p.dim(1);
    const auto src = p.data();
    for (Index s = 0; s < n; ++s)
      std::copy_n(src.data() + s * c * inner, c * inner, y.data() + (s * channels + offset) * inner);
    offsets.push_back(offset);
    offset += c;
  }
  Handles<T> hs;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    hs.push_back(p.handle());
    widths.push_back(p.dim(1));
  }
  return make_result<T>(std::move(out_shape), std::move(y), "concat_channels", std::move(hs),
                        [n, channels, inner, offsets = std::move(offsets), widths = std::move(widths)](
                            Node<T>& node, std::span<const T> gy) {
                          for (std::size_t k = 0; k < widths.size(); ++k) {
                            if (!node.needs(k)) continue;
                            auto g = node.grad_of(k);
                            const Index c = widths[k];
                            for (Index s = 0; s < n; ++s) {
                              const T* src = gy.data() + (s * channels + offsets[k]) * inner;
                              T* dst = g.data() + s * c * inner;
                              for (Index i = 0; i < c * inner; ++i) dst[i] += src[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("softmax_channels: expected rank >= 2, got " + to_string(x.shape()));
  const Index n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  std::vector<T> y(x.data().size());
  const auto xd = x.data();
  for (Index s = 0; s < n; ++s) {
    const T* src = xd.data() + s * c * inner;
    T* dst = y.data() + s * c * inner;
    for (Index i = 0; i < inner; ++i) {
      T peak = src[i];
      for (Index ch = 1; ch < c; ++ch) peak = std::max(peak, src[ch * inner + i]);
      T z = 0;
      for (Index ch = 0; ch < c; ++ch) {
        dst[ch * inner + i] = std::exp(src[ch * inner + i] - peak);
        z += dst[ch * inner + i];
      }
      for (Index ch = 0; ch < c; ++ch) dst[ch * inner + i] /= z;
    }
  }
  return make_result<T>(x.shape(), std::move(y), "softmax_channels", handles<T>({&x}),
                        [n, c, inner](Node<T>& node, std::span<const T> gy) {
                          auto out = node.output.lock();
                          auto gx = node.grad_of(0);
                          const T* yd = out->data.data();
                          for (Index s = 0; s < n; ++s)
                            for (Index i = 0; i < inner; ++i) {
                              T dot = 0;
                              for (Index ch = 0; ch < c; ++ch) {
                                const Index at = (s * c + ch) * inner + i;
                                dot += gy[at] * yd[at];
                              }
                              for (Index ch = 0; ch < c; ++ch) {
                                const Index at = (s * c + ch) * inner + i;
                                gx[at] += yd[at] * (gy[at] - dot);
                              }
                            }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (gzk::numel(shape) != x.numel()) mismatch("reshape", x.shape(), shape, "element counts differ");
  for (Index e : shape)
    if (e <= 0) throw ShapeError("reshape: non-positive extent in " + to_string(shape));
  std::vector<T> y(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(y), "reshape", handles<T>({&x}),
                        [](Node<T>& node, std::span<const T> gy) {
                          auto g = node.grad_of(0);
                          for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
                        });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank("global_avg_pool", x.shape(), 4);
  const Index n = x.dim(0), c = x.dim(1), inner = x.dim(2) * x.dim(3);
  std::vector<T> y(static_cast<std::size_t>(n * c));
  const auto xd = x.data();
  for (Index p = 0; p < n * c; ++p) {
    Acc<T> s = 0;
    for (Index i = 0; i < inner; ++i) s += xd[p * inner + i];
    y[p] = static_cast<T>(s / static_cast<Acc<T>>(inner));
  }
  return make_result<T>({n, c}, std::move(y), "global_avg_pool", handles<T>({&x}),
                        [n, c, inner](Node<T>& node, std::span<const T> gy) {
                          auto g = node.grad_of(0);
                          const T inv = T(1) / static_cast<T>(inner);
                          for (Index p = 0; p < n * c; ++p)
                            for (Index i = 0; i < inner; ++i) g[p * inner + i] += gy[p] * inv;
                        });
}

#define GZK_INSTANTIATE(T)                                                                                   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, Index, Index);                           \
  template Tensor<T> bias_add<T>(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> pool2d<T>(const Tensor<T>&, PoolMode, Index, Index);                                   \
  template Tensor<T> upsample_bilinear<T>(const Tensor<T>&, Index);                                         \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormMode,     \
                                   RunningStats<T>&, bool);                                                 \
  template Tensor<T> fully_connected<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> soft_argmax<T>(const Tensor<T>&, T);                                                   \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                             \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                          \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                         \
  template Tensor<T> square<T>(const Tensor<T>&);                                                           \
  template Tensor<T> log<T>(const Tensor<T>&, T);                                                           \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                              \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                             \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                                        \
  template Tensor<T> softmax_channels<T>(const Tensor<T>&);                                                 \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                   \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);

GZK_INSTANTIATE(float)
GZK_INSTANTIATE(double)
#undef GZK_INSTANTIATE

}  // namespace gzk::ops

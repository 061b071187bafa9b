#include "gzk/kernels.hpp"

#include <malloc.h>
#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

namespace gzk::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
using Acc = std::conditional_t<std::is_same_v<T, float>, double, T>;

template <typename T>
void im2col(const ConvDims& d, const T* x, T* col) {
  const Index hw_out = d.h_out * d.w_out;
  for (Index c = 0; c < d.c_in; ++c) {
    const T* plane = x + c * d.h * d.w;
    for (Index ki = 0; ki < d.k; ++ki) {
      for (Index kj = 0; kj < d.k; ++kj) {
        T* row = col + ((c * d.k + ki) * d.k + kj) * hw_out;
        for (Index oy = 0; oy < d.h_out; ++oy) {
          const Index iy = oy * d.stride - d.pad + ki;
          T* dst = row + oy * d.w_out;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.w_out, T(0));
            continue;
          }
          const T* src = plane + iy * d.w;
          if (d.stride == 1) {
            const Index lo = std::max<Index>(0, d.pad - kj);
            const Index hi = std::min<Index>(d.w_out, d.w + d.pad - kj);
            std::fill(dst, dst + lo, T(0));
            if (hi > lo) std::memcpy(dst + lo, src + lo - d.pad + kj, sizeof(T) * (hi - lo));
            std::fill(dst + std::max(lo, hi), dst + d.w_out, T(0));
          } else {
            for (Index ox = 0; ox < d.w_out; ++ox) {
              const Index ix = ox * d.stride - d.pad + kj;
              dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvDims& d, const T* col, T* gx) {
  const Index hw_out = d.h_out * d.w_out;
  for (Index c = 0; c < d.c_in; ++c) {
    T* plane = gx + c * d.h * d.w;
    for (Index ki = 0; ki < d.k; ++ki) {
      for (Index kj = 0; kj < d.k; ++kj) {
        const T* row = col + ((c * d.k + ki) * d.k + kj) * hw_out;
        for (Index oy = 0; oy < d.h_out; ++oy) {
          const Index iy = oy * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.h) continue;
          const T* src = row + oy * d.w_out;
          T* dst = plane + iy * d.w;
          if (d.stride == 1) {
            const Index lo = std::max<Index>(0, d.pad - kj);
            const Index hi = std::min<Index>(d.w_out, d.w + d.pad - kj);
            T* shifted = dst - d.pad + kj;
            for (Index ox = lo; ox < hi; ++ox) shifted[ox] += src[ox];
          } else {
            for (Index ox = 0; ox < d.w_out; ++ox) {
              const Index ix = ox * d.stride - d.pad + kj;
              if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

void set_num_threads(int n) {
  omp_set_num_threads(std::max(1, n));
  Eigen::setNbThreads(1);
}

int num_threads() { return omp_get_max_threads(); }

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

void configure_threads_from_env() {
  if (const char* env = std::getenv("GZK_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  Eigen::setNbThreads(1);
}

ConvDims ConvDims::make(Index n, Index c_in, Index h, Index w, Index c_out, Index k, Index stride,
                        Index pad) {
  ConvDims d;
  d.n = n;
  d.c_in = c_in;
  d.h = h;
  d.w = w;
  d.c_out = c_out;
  d.k = k;
  d.stride = stride;
  d.pad = pad;
  d.h_out = (h + 2 * pad - k) / stride + 1;
  d.w_out = (w + 2 * pad - k) / stride + 1;
  return d;
}

template <typename T>
void conv2d_forward(const ConvDims& d, const T* x, const T* weight, T* y) {
  const Index kdim = d.c_in * d.k * d.k;
  const Index hw_out = d.h_out * d.w_out;
  ConstMapMat<T> wm(weight, d.c_out, kdim);
#pragma omp parallel
  {
    std::vector<T> col(d.pointwise() ? 0 : static_cast<std::size_t>(kdim * hw_out));
#pragma omp for schedule(static)
    for (Index s = 0; s < d.n; ++s) {
      const T* xs = x + s * d.c_in * d.h * d.w;
      const T* cols = xs;
      if (!d.pointwise()) {
        im2col(d, xs, col.data());
        cols = col.data();
      }
      MapMat<T> ym(y + s * d.c_out * hw_out, d.c_out, hw_out);
      ym.noalias() = wm * ConstMapMat<T>(cols, kdim, hw_out);
    }
  }
}

template <typename T>
void conv2d_backward(const ConvDims& d, const T* x, const T* weight, const T* gy, T* gx, T* gw) {
  const Index kdim = d.c_in * d.k * d.k;
  const Index hw_out = d.h_out * d.w_out;
  const Index wsize = d.c_out * kdim;
  ConstMapMat<T> wm(weight, d.c_out, kdim);
  std::vector<T> partial(gw ? static_cast<std::size_t>(d.n * wsize) : 0);
#pragma omp parallel
  {
    std::vector<T> col(d.pointwise() ? 0 : static_cast<std::size_t>(kdim * hw_out));
    std::vector<T> gcol(gx && !d.pointwise() ? static_cast<std::size_t>(kdim * hw_out) : 0);
#pragma omp for schedule(static)
    for (Index s = 0; s < d.n; ++s) {
      const T* xs = x + s * d.c_in * d.h * d.w;
      ConstMapMat<T> gym(gy + s * d.c_out * hw_out, d.c_out, hw_out);
      if (gw) {
        const T* cols = xs;
        if (!d.pointwise()) {
          im2col(d, xs, col.data());
          cols = col.data();
        }
        MapMat<T> pw(partial.data() + s * wsize, d.c_out, kdim);
        pw.noalias() = gym * ConstMapMat<T>(cols, kdim, hw_out).transpose();
      }
      if (gx) {
        T* gxs = gx + s * d.c_in * d.h * d.w;
        if (d.pointwise()) {
          MapMat<T> gxm(gxs, kdim, hw_out);
          gxm.noalias() += wm.transpose() * gym;
        } else {
          MapMat<T> gcm(gcol.data(), kdim, hw_out);
          gcm.noalias() = wm.transpose() * gym;
          col2im_add(d, gcol.data(), gxs);
        }
      }
    }
  }
  if (gw) {
    for (Index s = 0; s < d.n; ++s) {
      const T* p = partial.data() + s * wsize;
      for (Index i = 0; i < wsize; ++i) gw[i] += p[i];
    }
  }
}

PoolDims PoolDims::make(Index n, Index c, Index h, Index w, Index window, Index stride) {
  PoolDims d;
  d.n = n;
  d.c = c;
  d.h = h;
  d.w = w;
  d.window = window;
  d.stride = stride;
  d.h_out = (h - window) / stride + 1;
  d.w_out = (w - window) / stride + 1;
  return d;
}

template <typename T>
void max_pool_forward(const PoolDims& d, const T* x, T* y, std::int32_t* argmax) {
  const Index planes = d.n * d.c;
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    const T* src = x + p * d.h * d.w;
    T* dst = y + p * d.h_out * d.w_out;
    std::int32_t* idx = argmax + p * d.h_out * d.w_out;
    for (Index oy = 0; oy < d.h_out; ++oy) {
      for (Index ox = 0; ox < d.w_out; ++ox) {
        Index best = (oy * d.stride) * d.w + ox * d.stride;
        for (Index ky = 0; ky < d.window; ++ky)
          for (Index kx = 0; kx < d.window; ++kx) {
            const Index at = (oy * d.stride + ky) * d.w + ox * d.stride + kx;
            if (src[at] > src[best]) best = at;  // strict: first maximum wins
          }
        dst[oy * d.w_out + ox] = src[best];
        idx[oy * d.w_out + ox] = static_cast<std::int32_t>(best);
      }
    }
  }
}

template <typename T>
void max_pool_backward(const PoolDims& d, const std::int32_t* argmax, const T* gy, T* gx) {
  const Index planes = d.n * d.c;
  const Index out = d.h_out * d.w_out;
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    T* dst = gx + p * d.h * d.w;
    for (Index o = 0; o < out; ++o) dst[argmax[p * out + o]] += gy[p * out + o];
  }
}

template <typename T>
void avg_pool_forward(const PoolDims& d, const T* x, T* y) {
  const Index planes = d.n * d.c;
  const T inv = T(1) / static_cast<T>(d.window * d.window);
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    const T* src = x + p * d.h * d.w;
    T* dst = y + p * d.h_out * d.w_out;
    for (Index oy = 0; oy < d.h_out; ++oy)
      for (Index ox = 0; ox < d.w_out; ++ox) {
        T s = 0;
        for (Index ky = 0; ky < d.window; ++ky)
          for (Index kx = 0; kx < d.window; ++kx) s += src[(oy * d.stride + ky) * d.w + ox * d.stride + kx];
        dst[oy * d.w_out + ox] = s * inv;
      }
  }
}

template <typename T>
void avg_pool_backward(const PoolDims& d, const T* gy, T* gx) {
  const Index planes = d.n * d.c;
  const T inv = T(1) / static_cast<T>(d.window * d.window);
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    const T* src = gy + p * d.h_out * d.w_out;
    T* dst = gx + p * d.h * d.w;
    for (Index oy = 0; oy < d.h_out; ++oy)
      for (Index ox = 0; ox < d.w_out; ++ox) {
        const T g = src[oy * d.w_out + ox] * inv;
        for (Index ky = 0; ky < d.window; ++ky)
          for (Index kx = 0; kx < d.window; ++kx) dst[(oy * d.stride + ky) * d.w + ox * d.stride + kx] += g;
      }
  }
}

namespace {

struct LerpTable {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

LerpTable lerp_table(Index in, Index out) {
  LerpTable t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (Index o = 0; o < out; ++o) {
    const double src = out > 1 ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    Index lo = static_cast<Index>(std::floor(src));
    lo = std::clamp<Index>(lo, 0, in - 1);
    t.lo[o] = lo;
    t.hi[o] = std::min(lo + 1, in - 1);
    t.frac[o] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

template <typename T>
void upsample_bilinear_forward(Index planes, Index h, Index w, Index factor, const T* x, T* y) {
  const Index ho = h * factor, wo = w * factor;
  const LerpTable ty = lerp_table(h, ho), tx = lerp_table(w, wo);
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    const T* src = x + p * h * w;
    T* dst = y + p * ho * wo;
    for (Index oy = 0; oy < ho; ++oy) {
      const T fy = static_cast<T>(ty.frac[oy]);
      const T* r0 = src + ty.lo[oy] * w;
      const T* r1 = src + ty.hi[oy] * w;
      for (Index ox = 0; ox < wo; ++ox) {
        const T fx = static_cast<T>(tx.frac[ox]);
        const Index x0 = tx.lo[ox], x1 = tx.hi[ox];
        const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const T bot = r1[x0] + fx * (r1[x1] - r1[x0]);
        dst[oy * wo + ox] = top + fy * (bot - top);
      }
    }
  }
}

template <typename T>
void upsample_bilinear_backward(Index planes, Index h, Index w, Index factor, const T* gy, T* gx) {
  const Index ho = h * factor, wo = w * factor;
  const LerpTable ty = lerp_table(h, ho), tx = lerp_table(w, wo);
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    const T* src = gy + p * ho * wo;
    T* dst = gx + p * h * w;
    for (Index oy = 0; oy < ho; ++oy) {
      const T fy = static_cast<T>(ty.frac[oy]);
      T* r0 = dst + ty.lo[oy] * w;
      T* r1 = dst + ty.hi[oy] * w;
      for (Index ox = 0; ox < wo; ++ox) {
        const T fx = static_cast<T>(tx.frac[ox]);
        const T g = src[oy * wo + ox];
        const Index x0 = tx.lo[ox], x1 = tx.hi[ox];
        r0[x0] += g * (T(1) - fy) * (T(1) - fx);
        r0[x1] += g * (T(1) - fy) * fx;
        r1[x0] += g * fy * (T(1) - fx);
        r1[x1] += g * fy * fx;
      }
    }
  }
}

namespace {

/// Sum over samples and positions of one channel. Accumulating per position
/// first keeps the inner loop a vectorizable elementwise add; the order is
/// fixed, so results do not depend on the thread count.
template <typename T, typename F>
Acc<T> channel_sum(const NormDims& d, Index c, std::vector<Acc<T>>& lane, F&& term) {
  std::fill(lane.begin(), lane.end(), Acc<T>(0));
  for (Index s = 0; s < d.n; ++s) {
    const Index off = (s * d.c + c) * d.inner;
    for (Index i = 0; i < d.inner; ++i) lane[static_cast<std::size_t>(i)] += term(off + i);
  }
  Acc<T> total = 0;
  for (Acc<T> v : lane) total += v;
  return total;
}

}  // namespace

template <typename T>
void batch_norm_forward(const NormDims& d, const T* x, const T* gamma, const T* beta, bool train,
                        const T* running_mean, const T* running_var, T eps, bool fuse_relu, T* y,
                        T* mean, T* invstd) {
  const Index count = d.n * d.inner;
#pragma omp parallel
  {
    std::vector<Acc<T>> lane(train ? static_cast<std::size_t>(d.inner) : 0);
#pragma omp for schedule(static)
    for (Index c = 0; c < d.c; ++c) {
      T mu, is;
      if (train) {
        const Acc<T> m = channel_sum<T>(d, c, lane, [x](Index i) { return static_cast<Acc<T>>(x[i]); }) /
                         static_cast<Acc<T>>(count);
        const Acc<T> v = channel_sum<T>(d, c, lane, [x, m](Index i) {
                           const Acc<T> dv = static_cast<Acc<T>>(x[i]) - m;
                           return dv * dv;
                         }) /
                         static_cast<Acc<T>>(count);
        mu = static_cast<T>(m);
        is = static_cast<T>(Acc<T>(1) / std::sqrt(v + static_cast<Acc<T>>(eps)));
      } else {
        mu = running_mean[c];
        is = static_cast<T>(Acc<T>(1) /
                            std::sqrt(static_cast<Acc<T>>(running_var[c]) + static_cast<Acc<T>>(eps)));
      }
      mean[c] = mu;
      invstd[c] = is;
      const T scale = gamma[c] * is;
      const T shift = beta[c] - mu * scale;
      for (Index s_ = 0; s_ < d.n; ++s_) {
        const T* p = x + (s_ * d.c + c) * d.inner;
        T* q = y + (s_ * d.c + c) * d.inner;
        if (fuse_relu) {
          for (Index i = 0; i < d.inner; ++i) q[i] = std::max(T(0), p[i] * scale + shift);
        } else {
          for (Index i = 0; i < d.inner; ++i) q[i] = p[i] * scale + shift;
        }
      }
    }
  }
}

template <typename T>
void batch_norm_backward(const NormDims& d, const T* x, const T* y, const T* gamma, const T* mean,
                         const T* invstd, bool train, const T* gy, T* gx, T* ggamma, T* gbeta) {
  const Index count = d.n * d.inner;
#pragma omp parallel
  {
    // g: incoming gradient, masked where a fused ReLU output is zero
    std::vector<T> g(static_cast<std::size_t>(d.n * d.inner));
    std::vector<Acc<T>> lane_g(static_cast<std::size_t>(d.inner)), lane_gx(static_cast<std::size_t>(d.inner));
#pragma omp for schedule(static)
    for (Index c = 0; c < d.c; ++c) {
      const T mu = mean[c], is = invstd[c];
      std::fill(lane_g.begin(), lane_g.end(), Acc<T>(0));
      std::fill(lane_gx.begin(), lane_gx.end(), Acc<T>(0));
      for (Index s = 0; s < d.n; ++s) {
        const Index off = (s * d.c + c) * d.inner;
        T* gs = g.data() + s * d.inner;
        if (y) {
          for (Index i = 0; i < d.inner; ++i) gs[i] = y[off + i] > T(0) ? gy[off + i] : T(0);
        } else {
          std::copy(gy + off, gy + off + d.inner, gs);
        }
        Acc<T>* lg = lane_g.data();
        Acc<T>* lx = lane_gx.data();
        const T* xs = x + off;
        for (Index i = 0; i < d.inner; ++i) {
          lg[i] += static_cast<Acc<T>>(gs[i]);
          lx[i] += static_cast<Acc<T>>(gs[i]) * static_cast<Acc<T>>((xs[i] - mu) * is);
        }
      }
      Acc<T> sum_g = 0, sum_gx = 0;
      for (Index i = 0; i < d.inner; ++i) {
        sum_g += lane_g[static_cast<std::size_t>(i)];
        sum_gx += lane_gx[static_cast<std::size_t>(i)];
      }
      if (gbeta) gbeta[c] += static_cast<T>(sum_g);
      if (ggamma) ggamma[c] += static_cast<T>(sum_gx);
      if (!gx) continue;
      const T k = gamma[c] * is;
      const T mg = train ? static_cast<T>(sum_g / static_cast<Acc<T>>(count)) : T(0);
      const T mgx = train ? static_cast<T>(sum_gx / static_cast<Acc<T>>(count)) : T(0);
      for (Index s = 0; s < d.n; ++s) {
        const Index off = (s * d.c + c) * d.inner;
        const T* gs = g.data() + s * d.inner;
        const T* xs = x + off;
        T* gxs = gx + off;
        for (Index i = 0; i < d.inner; ++i) {
          const T xhat = (xs[i] - mu) * is;
          gxs[i] += k * (gs[i] - mg - xhat * mgx);
        }
      }
    }
  }
}

template <typename T>
void matmul(Index n, Index f, Index g, const T* x, const T* w, const T* bias, T* y) {
  MapMat<T> ym(y, n, g);
  ym.noalias() = ConstMapMat<T>(x, n, f) * ConstMapMat<T>(w, f, g);
  if (bias)
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < g; ++c) y[r * g + c] += bias[c];
}

template <typename T>
void matmul_backward(Index n, Index f, Index g, const T* x, const T* w, const T* gy, T* gx, T* gw,
                     T* gb) {
  ConstMapMat<T> gym(gy, n, g);
  if (gx) MapMat<T>(gx, n, f).noalias() += gym * ConstMapMat<T>(w, f, g).transpose();
  if (gw) MapMat<T>(gw, f, g).noalias() += ConstMapMat<T>(x, n, f).transpose() * gym;
  if (gb)
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < g; ++c) gb[c] += gy[r * g + c];
}

#define GZK_INSTANTIATE(T)                                                                          \
  template void conv2d_forward<T>(const ConvDims&, const T*, const T*, T*);                         \
  template void conv2d_backward<T>(const ConvDims&, const T*, const T*, const T*, T*, T*);          \
  template void max_pool_forward<T>(const PoolDims&, const T*, T*, std::int32_t*);                  \
  template void max_pool_backward<T>(const PoolDims&, const std::int32_t*, const T*, T*);           \
  template void avg_pool_forward<T>(const PoolDims&, const T*, T*);                                 \
  template void avg_pool_backward<T>(const PoolDims&, const T*, T*);                                \
  template void upsample_bilinear_forward<T>(Index, Index, Index, Index, const T*, T*);             \
  template void upsample_bilinear_backward<T>(Index, Index, Index, Index, const T*, T*);            \
  template void batch_norm_forward<T>(const NormDims&, const T*, const T*, const T*, bool,          \
                                      const T*, const T*, T, bool, T*, T*, T*);                     \
  template void batch_norm_backward<T>(const NormDims&, const T*, const T*, const T*, const T*,     \
                                       const T*, bool, const T*, T*, T*, T*);                       \
  template void matmul<T>(Index, Index, Index, const T*, const T*, const T*, T*);                   \
  template void matmul_backward<T>(Index, Index, Index, const T*, const T*, const T*, T*, T*, T*);

GZK_INSTANTIATE(float)
GZK_INSTANTIATE(double)
#undef GZK_INSTANTIATE

}  // namespace gzk::kernels

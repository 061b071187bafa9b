#include "gzk/reference.hpp"

#include <cmath>

namespace gzk::reference {

template <typename T>
std::vector<T> conv2d(const std::vector<T>& x, const Shape& xs, const std::vector<T>& w, const Shape& ws,
                      Index stride, Index pad) {
  const Index n = xs[0], ci = xs[1], h = xs[2], wd = xs[3];
  const Index co = ws[0], k = ws[2];
  const Index ho = (h + 2 * pad - k) / stride + 1;
  const Index wo = (wd + 2 * pad - k) / stride + 1;
  std::vector<T> y(static_cast<std::size_t>(n * co * ho * wo), T(0));
  for (Index b = 0; b < n; ++b)
    for (Index o = 0; o < co; ++o)
      for (Index oy = 0; oy < ho; ++oy)
        for (Index ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (Index i = 0; i < ci; ++i)
            for (Index ky = 0; ky < k; ++ky)
              for (Index kx = 0; kx < k; ++kx) {
                const Index iy = oy * stride - pad + ky;
                const Index ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += static_cast<double>(x[((b * ci + i) * h + iy) * wd + ix]) *
                       static_cast<double>(w[((o * ci + i) * k + ky) * k + kx]);
              }
          y[((b * co + o) * ho + oy) * wo + ox] = static_cast<T>(acc);
        }
  return y;
}

template <typename T>
std::vector<T> max_pool(const std::vector<T>& x, const Shape& xs, Index window) {
  const Index planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  const Index ho = h / window, wo = w / window;
  std::vector<T> y(static_cast<std::size_t>(planes * ho * wo));
  for (Index p = 0; p < planes; ++p)
    for (Index oy = 0; oy < ho; ++oy)
      for (Index ox = 0; ox < wo; ++ox) {
        T best = x[(p * h + oy * window) * w + ox * window];
        for (Index ky = 0; ky < window; ++ky)
          for (Index kx = 0; kx < window; ++kx) {
            const T v = x[(p * h + oy * window + ky) * w + ox * window + kx];
            if (v > best) best = v;
          }
        y[(p * ho + oy) * wo + ox] = best;
      }
  return y;
}

template <typename T>
std::vector<T> avg_pool(const std::vector<T>& x, const Shape& xs, Index window) {
  const Index planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  const Index ho = h / window, wo = w / window;
  std::vector<T> y(static_cast<std::size_t>(planes * ho * wo));
  for (Index p = 0; p < planes; ++p)
    for (Index oy = 0; oy < ho; ++oy)
      for (Index ox = 0; ox < wo; ++ox) {
        T acc = 0;
        for (Index ky = 0; ky < window; ++ky)
          for (Index kx = 0; kx < window; ++kx) acc += x[(p * h + oy * window + ky) * w + ox * window + kx];
        y[(p * ho + oy) * wo + ox] = acc / static_cast<T>(window * window);
      }
  return y;
}

template <typename T>
std::vector<T> fully_connected(const std::vector<T>& x, Index n, Index f, const std::vector<T>& w, Index g,
                               const std::vector<T>& b) {
  std::vector<T> y(static_cast<std::size_t>(n * g));
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < g; ++c) {
      double acc = static_cast<double>(b[c]);
      for (Index k = 0; k < f; ++k) acc += static_cast<double>(x[r * f + k]) * static_cast<double>(w[k * g + c]);
      y[r * g + c] = static_cast<T>(acc);
    }
  return y;
}

template <typename T>
std::vector<T> upsample_bilinear(const std::vector<T>& x, const Shape& xs, Index factor) {
  const Index planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  const Index ho = h * factor, wo = w * factor;
  std::vector<T> y(static_cast<std::size_t>(planes * ho * wo));
  auto sample = [&](Index p, double sy, double sx) {
    // f(sy, sx) = sum over the four neighbours of weight * value
    double acc = 0.0;
    for (Index iy = 0; iy < h; ++iy) {
      const double wy = std::max(0.0, 1.0 - std::abs(sy - static_cast<double>(iy)));
      if (wy == 0.0) continue;
      for (Index ix = 0; ix < w; ++ix) {
        const double wx = std::max(0.0, 1.0 - std::abs(sx - static_cast<double>(ix)));
        if (wx == 0.0) continue;
        acc += wy * wx * static_cast<double>(x[(p * h + iy) * w + ix]);
      }
    }
    return acc;
  };
  for (Index p = 0; p < planes; ++p)
    for (Index oy = 0; oy < ho; ++oy)
      for (Index ox = 0; ox < wo; ++ox) {
        const double sy = ho > 1 ? static_cast<double>(oy) * (h - 1) / (ho - 1) : 0.0;
        const double sx = wo > 1 ? static_cast<double>(ox) * (w - 1) / (wo - 1) : 0.0;
        y[(p * ho + oy) * wo + ox] = static_cast<T>(sample(p, sy, sx));
      }
  return y;
}

#define GZK_INSTANTIATE(T)                                                                                    \
  template std::vector<T> conv2d<T>(const std::vector<T>&, const Shape&, const std::vector<T>&, const Shape&, \
                                    Index, Index);                                                            \
  template std::vector<T> max_pool<T>(const std::vector<T>&, const Shape&, Index);                            \
  template std::vector<T> avg_pool<T>(const std::vector<T>&, const Shape&, Index);                            \
  template std::vector<T> fully_connected<T>(const std::vector<T>&, Index, Index, const std::vector<T>&,       \
                                             Index, const std::vector<T>&);                                   \
  template std::vector<T> upsample_bilinear<T>(const std::vector<T>&, const Shape&, Index);

GZK_INSTANTIATE(float)
GZK_INSTANTIATE(double)
#undef GZK_INSTANTIATE

}  // namespace gzk::reference

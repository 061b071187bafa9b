#include "gzk/harness/augment.hpp"

#include <algorithm>
#include <cmath>

#include "gzk/random.hpp"

namespace gzk::harness {

eye::Point transform_point(const Transform& t, eye::Point p, eye::Dims dims) {
  const double cu = (dims.width - 1) / 2.0, cv = (dims.height - 1) / 2.0;
  return {cu + t.scale * (p.u - cu) + t.dx, cv + t.scale * (p.v - cv) + t.dy};
}

eye::EyeSample transform_sample(const eye::EyeSample& s, const Transform& t, eye::Dims dims) {
  eye::EyeSample out = s;
  const double cu = (dims.width - 1) / 2.0, cv = (dims.height - 1) / 2.0;
  const int w = dims.width, h = dims.height;
  auto at = [&](int r, int c) { return s.image[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)]; };
  for (int r = 0; r < h; ++r) {
    // inverse map of the output pixel centre, clamped for edge replication
    const double sv = std::clamp(cv + (r - t.dy - cv) / t.scale, 0.0, h - 1.0);
    const int r0 = std::min(static_cast<int>(sv), h - 1), r1 = std::min(r0 + 1, h - 1);
    const double fy = sv - r0;
    for (int c = 0; c < w; ++c) {
      const double su = std::clamp(cu + (c - t.dx - cu) / t.scale, 0.0, w - 1.0);
      const int c0 = std::min(static_cast<int>(su), w - 1), c1 = std::min(c0 + 1, w - 1);
      const double fx = su - c0;
      const double top = (1.0 - fx) * at(r0, c0) + fx * at(r0, c1);
      const double bottom = (1.0 - fx) * at(r1, c0) + fx * at(r1, c1);
      out.image[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] =
          static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  for (auto& p : out.landmarks) p = transform_point(t, p, dims);
  const eye::Point center = transform_point(t, {s.eyeball.center_u, s.eyeball.center_v}, dims);
  out.eyeball = {center.u, center.v, s.eyeball.radius * t.scale};
  return out;
}

Augmented augment(const eye::EyeSample& s, std::uint64_t seed, const AugmentConfig& cfg, eye::Dims dims) {
  if (cfg.enabled) {
    Rng rng(seed);
    for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
      Transform t;
      t.dx = static_cast<int>(rng.integer(-cfg.max_translate, cfg.max_translate));
      t.dy = static_cast<int>(rng.integer(-cfg.max_translate, cfg.max_translate));
      t.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
      eye::LandmarkSet moved;
      for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = transform_point(t, s.landmarks[i], dims);
      if (eye::landmarks_in_bounds(moved, dims)) return {transform_sample(s, t, dims), t, true};
    }
  }
  return {s, Transform{}, false};
}

}  // namespace gzk::harness

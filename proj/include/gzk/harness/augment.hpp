#pragma once

// Translation and scaling about the image centre, applied consistently to the
// image, landmarks and eyeball; gaze is unchanged.

#include <cstdint>

#include "gzk/dataset.hpp"
#include "gzk/harness/config.hpp"

namespace gzk::harness {

struct Transform {
  int dx = 0;
  int dy = 0;
  double scale = 1.0;
};

/// c + scale * (p - c) + (dx, dy) with c = ((W - 1) / 2, (H - 1) / 2), the
/// centre of the pixel grid.
eye::Point transform_point(const Transform& t, eye::Point p, eye::Dims dims);

/// Bilinear resampling of the image with edge replication; labels mapped by
/// the same transform, radius scaled.
eye::EyeSample transform_sample(const eye::EyeSample& s, const Transform& t, eye::Dims dims);

struct Augmented {
  eye::EyeSample sample;
  Transform transform;  // identity when passed through
  bool applied = false;
};

/// Draws transforms from `seed` until every landmark stays in the image, up to
/// cfg.max_tries; otherwise returns the sample unchanged.
Augmented augment(const eye::EyeSample& s, std::uint64_t seed, const AugmentConfig& cfg, eye::Dims dims);

}  // namespace gzk::harness

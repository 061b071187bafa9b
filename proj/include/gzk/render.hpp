#pragma once

// Schematic eye renderer and the dense training targets derived from
// landmarks and eyeball parameters.

#include <cstdint>
#include <vector>

#include "gzk/eye.hpp"

namespace gzk::eye {

struct Appearance {
  double openness = 1.0;
  double skin = 0.62;
  double sclera = 0.88;
  double iris = 0.38;
  double pupil = 0.08;
  double brightness = 1.0;  // multiplies every intensity before noise
  double noise_sigma = 0.02;
};

struct EyeParams {
  GazeAngles gaze;
  EyeballParams eyeball;
  Appearance look;
};

/// Row-major H x W intensities in [0, 1]; 4x4 supersampled coverage.
std::vector<float> render_eye(const EyeParams& params, Dims dims, std::uint64_t seed);

inline constexpr double kDefaultHeatmapSigma = 2.0;

/// 18 x H x W maps exp(-|p - landmark|^2 / (2 sigma^2)).
std::vector<float> render_heatmaps(const LandmarkSet& landmarks, double sigma, Dims dims);

enum class GazemapClass : std::uint8_t { iris = 0, eyeball = 1, background = 2 };
inline constexpr int kGazemapClasses = 3;

/// Per-pixel class at pixel centres: eyeball disc of radius r about the
/// eyeball centre, overridden by the projected iris.
std::vector<std::uint8_t> render_gazemap(GazeAngles g, const EyeballParams& eyeball, Dims dims);

/// 3 x H x W one-hot encoding; channel index equals the class value.
std::vector<float> gazemap_one_hot(const std::vector<std::uint8_t>& classes, Dims dims);

}  // namespace gzk::eye

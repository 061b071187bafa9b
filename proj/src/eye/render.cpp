#include "gzk/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gzk/random.hpp"

namespace gzk::eye {

namespace {

constexpr int kSupersample = 4;
constexpr double kScleraFalloff = 0.15;
constexpr double kSkinGradient = 0.05;

}  // namespace

std::vector<float> render_eye(const EyeParams& params, Dims dims, std::uint64_t seed) {
  const auto& ball = params.eyeball;
  const auto& look = params.look;
  const IrisProjection iris(params.gaze, ball);
  const Eyelid lid = eyelid_shape(params.gaze, ball, look.openness);
  const double inv_r2 = 1.0 / (ball.radius * ball.radius);

  auto shade = [&](Point p) {
    if (!lid.contains(p)) return look.skin + kSkinGradient * (p.v / dims.height - 0.5);
    if (iris.contains(p, 0.5)) return look.pupil;
    if (iris.contains(p)) return look.iris;
    const double du = p.u - ball.center_u, dv = p.v - ball.center_v;
    const double d2 = std::min(1.0, (du * du + dv * dv) * inv_r2);
    return look.sclera * (1.0 - kScleraFalloff * d2);
  };

  Rng rng(seed);
  std::vector<float> image(static_cast<std::size_t>(dims.height) * static_cast<std::size_t>(dims.width));
  constexpr double step = 1.0 / kSupersample;
  for (int row = 0; row < dims.height; ++row) {
    for (int col = 0; col < dims.width; ++col) {
      double acc = 0.0;
      for (int i = 0; i < kSupersample; ++i)
        for (int j = 0; j < kSupersample; ++j)
          acc += shade({col - 0.5 + (j + 0.5) * step, row - 0.5 + (i + 0.5) * step});
      double value = look.brightness * acc / (kSupersample * kSupersample);
      if (look.noise_sigma > 0.0) value += look.noise_sigma * rng.normal();
      image[static_cast<std::size_t>(row) * static_cast<std::size_t>(dims.width) + static_cast<std::size_t>(col)] =
          static_cast<float>(std::clamp(value, 0.0, 1.0));
    }
  }
  return image;
}

std::vector<float> render_heatmaps(const LandmarkSet& landmarks, double sigma, Dims dims) {
  if (!(sigma > 0.0)) throw std::invalid_argument("render_heatmaps: sigma must be positive");
  const std::size_t plane = static_cast<std::size_t>(dims.height) * static_cast<std::size_t>(dims.width);
  std::vector<float> maps(kNumLandmarks * plane);
  const double k = -0.5 / (sigma * sigma);
  std::vector<double> gu(static_cast<std::size_t>(dims.width)), gv(static_cast<std::size_t>(dims.height));
  for (std::size_t i = 0; i < kNumLandmarks; ++i) {
    // separable: exp(k (du^2 + dv^2)) = exp(k du^2) exp(k dv^2)
    for (int c = 0; c < dims.width; ++c) gu[c] = std::exp(k * (c - landmarks[i].u) * (c - landmarks[i].u));
    for (int r = 0; r < dims.height; ++r) gv[r] = std::exp(k * (r - landmarks[i].v) * (r - landmarks[i].v));
    float* out = maps.data() + i * plane;
    for (int r = 0; r < dims.height; ++r)
      for (int c = 0; c < dims.width; ++c) *out++ = static_cast<float>(gv[r] * gu[c]);
  }
  return maps;
}

std::vector<std::uint8_t> render_gazemap(GazeAngles g, const EyeballParams& eyeball, Dims dims) {
  const IrisProjection iris(g, eyeball);
  const double r2 = eyeball.radius * eyeball.radius;
  std::vector<std::uint8_t> classes(static_cast<std::size_t>(dims.height) * static_cast<std::size_t>(dims.width));
  std::size_t idx = 0;
  for (int row = 0; row < dims.height; ++row) {
    for (int col = 0; col < dims.width; ++col, ++idx) {
      const double du = col - eyeball.center_u, dv = row - eyeball.center_v;
      GazemapClass cls = GazemapClass::background;
      if (iris.contains({double(col), double(row)}))
        cls = GazemapClass::iris;
      else if (du * du + dv * dv <= r2)
        cls = GazemapClass::eyeball;
      classes[idx] = static_cast<std::uint8_t>(cls);
    }
  }
  return classes;
}

std::vector<float> gazemap_one_hot(const std::vector<std::uint8_t>& classes, Dims dims) {
  const std::size_t plane = static_cast<std::size_t>(dims.height) * static_cast<std::size_t>(dims.width);
  if (classes.size() != plane) throw std::invalid_argument("gazemap_one_hot: class map does not match dims");
  std::vector<float> out(kGazemapClasses * plane, 0.0f);
  for (std::size_t p = 0; p < plane; ++p) out[classes[p] * plane + p] = 1.0f;
  return out;
}

}  // namespace gzk::eye

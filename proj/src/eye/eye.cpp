#include "gzk/eye.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gzk::eye {

namespace {

// Corner placement and lid heights, in eyeball radii.
constexpr double kCornerHalfWidth = 1.2;
constexpr double kCornerDrop = 0.05;
constexpr double kUpperBase = 0.35, kUpperPitch = 0.45, kUpperFollow = 0.5;
constexpr double kLowerBase = 0.25, kLowerPitch = 0.35, kLowerFollow = 0.25;

}  // namespace

Vec3 gaze_to_vector(GazeAngles g) {
  const double cp = std::cos(g.pitch);
  return {-cp * std::sin(g.yaw), -std::sin(g.pitch), -cp * std::cos(g.yaw)};
}

GazeAngles vector_to_gaze(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {std::asin(std::clamp(-v[1] / n, -1.0, 1.0)), std::atan2(-v[0], -v[2])};
}

double angular_error_deg(GazeAngles a, GazeAngles b) {
  const Vec3 x = gaze_to_vector(a), y = gaze_to_vector(b);
  const double dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
  // atan2 form of arccos(dot): exact zero for equal directions, no loss near 0 or 180
  const double cx = x[1] * y[2] - x[2] * y[1], cy = x[2] * y[0] - x[0] * y[2], cz = x[0] * y[1] - x[1] * y[0];
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot) * 180.0 / std::numbers::pi;
}

double iris_plane_ratio() { return std::cos(std::asin(kIrisToEyeballRatio)); }

Point iris_center(GazeAngles g, const EyeballParams& eyeball) {
  const double rp = eyeball.radius * iris_plane_ratio();
  return {eyeball.center_u - rp * std::sin(g.yaw) * std::cos(g.pitch), eyeball.center_v - rp * std::sin(g.pitch)};
}

Point iris_center(GazeAngles g, double radius, Dims dims) {
  return iris_center(g, EyeballParams::centered(dims, radius));
}

std::array<Point, kIrisBoundaryCount> iris_boundary(GazeAngles g, const EyeballParams& eyeball) {
  const Point c = iris_center(g, eyeball);
  const double half = eyeball.radius * kIrisToEyeballRatio;
  const double sp = std::sin(g.pitch), cp = std::cos(g.pitch), sy = std::sin(g.yaw), cy = std::cos(g.yaw);
  std::array<Point, kIrisBoundaryCount> out;
  for (std::size_t k = 0; k < kIrisBoundaryCount; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / kIrisBoundaryCount;
    const double a = half * std::cos(t), b = half * std::sin(t);
    // image-plane components of the iris-plane axes (-cos y, 0, sin y) and (sin p sin y, -cos p, sin p cos y)
    out[k] = {c.u - a * cy + b * sp * sy, c.v - b * cp};
  }
  return out;
}

IrisProjection::IrisProjection(GazeAngles g, const EyeballParams& eyeball)
    : center_(iris_center(g, eyeball)),
      half_(eyeball.radius * kIrisToEyeballRatio),
      sp_sy_(std::sin(g.pitch) * std::sin(g.yaw)),
      cp_(std::cos(g.pitch)),
      cy_(std::cos(g.yaw)) {}

bool IrisProjection::contains(Point p, double scale) const {
  // invert p - c = a * (-cos y, 0) + b * (sin p sin y, -cos p)
  const double b = -(p.v - center_.v) / cp_;
  const double a = (p.u - center_.u - b * sp_sy_) / -cy_;
  const double half = scale * half_;
  return a * a + b * b <= half * half;
}

bool inside_iris(GazeAngles g, const EyeballParams& eyeball, Point p, double scale) {
  return IrisProjection(g, eyeball).contains(p, scale);
}

bool Eyelid::arcs_at(double u, double& upper_v, double& lower_v) const {
  if (u < left_corner.u || u > right_corner.u) return false;
  const double mid = 0.5 * (left_corner.u + right_corner.u);
  const double s = (u - mid) / (0.5 * (right_corner.u - left_corner.u));
  const double corner_v = left_corner.v + (right_corner.v - left_corner.v) * 0.5 * (s + 1.0);
  const double bulge = 1.0 - s * s;
  const double mid_corner_v = 0.5 * (left_corner.v + right_corner.v);
  upper_v = corner_v + (upper_apex_v - mid_corner_v) * bulge;
  lower_v = corner_v + (lower_apex_v - mid_corner_v) * bulge;
  return true;
}

bool Eyelid::contains(Point p) const {
  double up = 0, lo = 0;
  return arcs_at(p.u, up, lo) && p.v >= up && p.v <= lo;
}

Eyelid eyelid_shape(GazeAngles g, const EyeballParams& eyeball, double openness) {
  const double r = eyeball.radius;
  const double follow = iris_center(g, eyeball).v - eyeball.center_v;
  const double cp = std::cos(g.pitch);
  const double corner_v = eyeball.center_v + kCornerDrop * r;
  Eyelid lid;
  lid.left_corner = {eyeball.center_u - kCornerHalfWidth * r, corner_v};
  lid.right_corner = {eyeball.center_u + kCornerHalfWidth * r, corner_v};
  lid.upper_apex_v = eyeball.center_v + kUpperFollow * follow - r * openness * (kUpperBase + kUpperPitch * cp);
  lid.lower_apex_v = eyeball.center_v + kLowerFollow * follow + r * openness * (kLowerBase + kLowerPitch * cp);
  return lid;
}

LandmarkSet synth_landmarks(GazeAngles g, const EyeballParams& eyeball, double openness) {
  LandmarkSet out;
  const Eyelid lid = eyelid_shape(g, eyeball, openness);
  const double mid = eyeball.center_u, half_width = kCornerHalfWidth * eyeball.radius;
  constexpr std::array<double, 3> kArcStops{-0.5, 0.0, 0.5};
  out[0] = lid.left_corner;
  out[4] = lid.right_corner;
  for (std::size_t i = 0; i < 3; ++i) {
    double up = 0, lo = 0;
    const double u_upper = mid + kArcStops[i] * half_width;
    lid.arcs_at(u_upper, up, lo);
    out[1 + i] = {u_upper, up};
    // lower arc runs right to left so the eight points trace a closed contour
    const double u_lower = mid - kArcStops[i] * half_width;
    lid.arcs_at(u_lower, up, lo);
    out[5 + i] = {u_lower, lo};
  }
  const auto iris = iris_boundary(g, eyeball);
  std::copy(iris.begin(), iris.end(), out.begin() + kIrisBoundaryBegin);
  out[kIrisCenter] = iris_center(g, eyeball);
  out[kEyeballCenter] = {eyeball.center_u, eyeball.center_v};
  return out;
}

bool landmarks_in_bounds(const LandmarkSet& landmarks, Dims dims) {
  return std::all_of(landmarks.begin(), landmarks.end(), [&](const Point& p) {
    return p.u >= 0.0 && p.v >= 0.0 && p.u <= dims.width - 1.0 && p.v <= dims.height - 1.0;
  });
}

}  // namespace gzk::eye

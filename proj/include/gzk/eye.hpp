#pragma once

// Eyeball and iris geometry under orthographic projection.
//
// Image coordinates: u is the column, v the row, both measured from the
// centre of pixel (0, 0). Gaze (pitch, yaw) maps to the unit vector
// (-cos p sin y, -sin p, -cos p cos y); the camera looks along +z, so a
// straight-ahead eye points at (0, 0, -1). Positive pitch looks up (smaller v),
// positive yaw looks toward smaller u.

#include <array>
#include <cstddef>

namespace gzk::eye {

inline constexpr std::size_t kNumLandmarks = 18;
inline constexpr std::size_t kEyelidBegin = 0;
inline constexpr std::size_t kIrisBoundaryBegin = 8;
inline constexpr std::size_t kIrisBoundaryCount = 8;
inline constexpr std::size_t kIrisCenter = 16;
inline constexpr std::size_t kEyeballCenter = 17;

/// Iris radius over eyeball radius (12 mm iris, 24 mm eyeball).
inline constexpr double kIrisToEyeballRatio = 0.5;

struct Dims {
  int height = 64;
  int width = 96;

  friend bool operator==(const Dims&, const Dims&) = default;
};

struct GazeAngles {
  double pitch = 0.0;
  double yaw = 0.0;
};

struct EyeballParams {
  double center_u = 48.0;
  double center_v = 32.0;
  double radius = 20.0;

  /// Eyeball centred in the image, as generated before augmentation.
  static EyeballParams centered(Dims dims, double radius) { return {dims.width / 2.0, dims.height / 2.0, radius}; }
};

struct Point {
  double u = 0.0;
  double v = 0.0;
};

using LandmarkSet = std::array<Point, kNumLandmarks>;
using Vec3 = std::array<double, 3>;

Vec3 gaze_to_vector(GazeAngles g);
GazeAngles vector_to_gaze(const Vec3& v);

/// Angle between the two gaze directions, in degrees.
double angular_error_deg(GazeAngles a, GazeAngles b);

/// cos(asin(1/2)): distance of the iris plane from the eyeball centre, in radii.
double iris_plane_ratio();

/// Projected iris centre: c + r' * (-sin(yaw) cos(pitch), -sin(pitch)).
Point iris_center(GazeAngles g, const EyeballParams& eyeball);

/// The same formula anchored at the image centre (m/2, n/2), m = width.
Point iris_center(GazeAngles g, double radius, Dims dims);

/// Eight points at angles 2*pi*k/8 on the projected iris ellipse.
std::array<Point, kIrisBoundaryCount> iris_boundary(GazeAngles g, const EyeballParams& eyeball);

/// Projected iris disc, precomputed for repeated point tests.
class IrisProjection {
 public:
  IrisProjection(GazeAngles g, const EyeballParams& eyeball);
  /// scale 1 tests the iris, 0.5 the pupil.
  bool contains(Point p, double scale = 1.0) const;

 private:
  Point center_;
  double half_, sp_sy_, cp_, cy_;
};

bool inside_iris(GazeAngles g, const EyeballParams& eyeball, Point p, double scale = 1.0);

/// Quadratic upper and lower lid arcs meeting at the eye corners.
struct Eyelid {
  Point left_corner;
  Point right_corner;
  double upper_apex_v;
  double lower_apex_v;

  /// Lid v-coordinates at column u; false outside the corners.
  bool arcs_at(double u, double& upper_v, double& lower_v) const;
  bool contains(Point p) const;
};

/// Lid opening shrinks with |pitch| (cos scaling) and follows the iris vertically.
Eyelid eyelid_shape(GazeAngles g, const EyeballParams& eyeball, double openness);

/// Indices 0..7 eyelid (left corner, 3 upper, right corner, 3 lower), 8..15 iris
/// boundary, 16 iris centre, 17 eyeball centre.
LandmarkSet synth_landmarks(GazeAngles g, const EyeballParams& eyeball, double openness = 1.0);

/// Every point within [0, width-1] x [0, height-1].
bool landmarks_in_bounds(const LandmarkSet& landmarks, Dims dims);

}  // namespace gzk::eye

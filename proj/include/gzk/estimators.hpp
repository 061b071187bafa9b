#pragma once

// Landmarks to gaze: eyeball-model fitting, a linear regressor over landmark
// features, and per-subject calibration of either.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gzk/eye.hpp"

namespace gzk::est {

using eye::Dims;
using eye::EyeballParams;
using eye::GazeAngles;
using eye::LandmarkSet;

struct FitOptions {
  int max_iterations = 100;
  double initial_lambda = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double step_tolerance = 1e-8;      // parameter step norm
  double residual_tolerance = 1e-10;  // change in the sum of squares
};

struct FitResult {
  GazeAngles gaze;
  EyeballParams eyeball;
  double residual_rms = 0.0;  // pixels, over the fitted coordinates
  int iterations = 0;
  bool converged = false;
  std::vector<double> accepted_costs;  // sum of squares, initial then after each accepted step
};

/// Landmarks entering the fit residual: iris boundary, iris centre, eyeball centre.
inline constexpr std::size_t kFitBegin = eye::kIrisBoundaryBegin;
inline constexpr std::size_t kFitEnd = eye::kEyeballCenter + 1;

/// Levenberg-Marquardt over (pitch, yaw, centre_u, centre_v, radius) from
/// (0, 0, W/2, H/2, radius_hint). Throws std::invalid_argument when a fitted
/// landmark is non-finite or outside the image or radius_hint <= 0; degenerate
/// landmark layouts return converged = false.
FitResult fit_eyeball_model(const LandmarkSet& landmarks, double radius_hint, Dims dims, const FitOptions& opts = {});

inline constexpr std::size_t kLightweightFeatures = 40;
using FeatureVector = std::array<double, kLightweightFeatures>;

/// 36 landmark coordinates relative to the landmark centroid in radius units,
/// the radius, closed-form pitch and yaw from the iris offset, and the lid
/// opening in radius units. Invariant to translating all landmarks.
FeatureVector lightweight_features(const LandmarkSet& landmarks, double radius);

struct LightweightSample {
  LandmarkSet landmarks;
  double radius = 0.0;
  GazeAngles gaze;
};

struct LightweightModel {
  FeatureVector feature_mean{};
  FeatureVector feature_scale{};
  std::array<FeatureVector, 2> weights{};  // pitch, yaw rows over normalized features
  std::array<double, 2> intercept{};
  double lambda = 1e-3;
  std::vector<std::string> warnings;
};

inline constexpr double kRidgeLambda = 1e-3;

/// Ridge regression on standardized features minimizing
/// sum ||y - b - W x||^2 + lambda ||W||^2; the intercept is unpenalized.
LightweightModel train_lightweight(std::span<const LightweightSample> samples, double lambda = kRidgeLambda);

/// The ridge solver over precomputed feature rows; standardization is fitted here.
LightweightModel fit_ridge(std::span<const FeatureVector> features, std::span<const GazeAngles> targets,
                           double lambda = kRidgeLambda);

GazeAngles predict_features(const LightweightModel& model, const FeatureVector& features);
GazeAngles predict_lightweight(const LightweightModel& model, const LandmarkSet& landmarks, double radius);

/// Sample count from which the affine term is fitted.
inline constexpr int kAffineMinSamples = 10;

struct PersonalCalibration {
  int subject_id = 0;
  std::array<double, 2> bias{0.0, 0.0};               // (pitch, yaw) radians
  std::array<double, 4> affine{1.0, 0.0, 0.0, 1.0};  // row-major 2x2
  int n_samples_used = 0;

  GazeAngles apply(GazeAngles g) const;
};

/// Least-squares correction from base predictions to truths: identity for no
/// samples, a bias below kAffineMinSamples, affine plus bias from there on.
PersonalCalibration calibrate_personal(std::span<const GazeAngles> predictions, std::span<const GazeAngles> truths,
                                       int subject_id = 0);

nlohmann::json to_json(const LightweightModel& model);
LightweightModel lightweight_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PersonalCalibration& calib);
PersonalCalibration calibration_from_json(const nlohmann::json& j);

/// Shortest decimal string that parses back to the same double.
std::string exact_decimal(double v);
double parse_decimal(const std::string& s);

}  // namespace gzk::est

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "gzk/estimators.hpp"

namespace gzk::est {

namespace {

constexpr int kParams = 5;
constexpr int kResiduals = 2 * static_cast<int>(kFitEnd - kFitBegin);

using ParamVec = Eigen::Matrix<double, kParams, 1>;
using ResidualVec = Eigen::Matrix<double, kResiduals, 1>;
using Jacobian = Eigen::Matrix<double, kResiduals, kParams>;

GazeAngles gaze_of(const ParamVec& p) { return {p[0], p[1]}; }
EyeballParams eyeball_of(const ParamVec& p) { return {p[2], p[3], p[4]}; }

ResidualVec residual(const ParamVec& p, const LandmarkSet& target) {
  const GazeAngles g = gaze_of(p);
  const EyeballParams e = eyeball_of(p);
  const auto boundary = eye::iris_boundary(g, e);
  std::array<eye::Point, kFitEnd - kFitBegin> model;
  std::copy(boundary.begin(), boundary.end(), model.begin());
  model[eye::kIrisCenter - kFitBegin] = eye::iris_center(g, e);
  model[eye::kEyeballCenter - kFitBegin] = {e.center_u, e.center_v};
  ResidualVec r;
  for (std::size_t i = 0; i < model.size(); ++i) {
    r[static_cast<int>(2 * i)] = model[i].u - target[kFitBegin + i].u;
    r[static_cast<int>(2 * i + 1)] = model[i].v - target[kFitBegin + i].v;
  }
  return r;
}

Jacobian jacobian(const ParamVec& p, const LandmarkSet& target) {
  Jacobian J;
  for (int j = 0; j < kParams; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(p[j]));
    ParamVec up = p, down = p;
    up[j] += h;
    down[j] -= h;
    J.col(j) = (residual(up, target) - residual(down, target)) / (up[j] - down[j]);
  }
  return J;
}

/// Iris points collapsed onto a line or a point carry no ellipse to fit.
bool degenerate(const LandmarkSet& lm) {
  double mu = 0, mv = 0;
  constexpr std::size_t n = eye::kIrisCenter + 1 - eye::kIrisBoundaryBegin;
  for (std::size_t i = eye::kIrisBoundaryBegin; i <= eye::kIrisCenter; ++i) {
    mu += lm[i].u;
    mv += lm[i].v;
  }
  mu /= n;
  mv /= n;
  double suu = 0, svv = 0, suv = 0;
  for (std::size_t i = eye::kIrisBoundaryBegin; i <= eye::kIrisCenter; ++i) {
    const double du = lm[i].u - mu, dv = lm[i].v - mv;
    suu += du * du;
    svv += dv * dv;
    suv += du * dv;
  }
  const double trace = suu + svv, det = suu * svv - suv * suv;
  const double min_eig = 0.5 * (trace - std::sqrt(std::max(0.0, trace * trace - 4.0 * det)));
  return trace < 1e-12 || min_eig <= 1e-9 * trace;
}

}  // namespace

FitResult fit_eyeball_model(const LandmarkSet& landmarks, double radius_hint, Dims dims, const FitOptions& opts) {
  if (!(radius_hint > 0.0) || !std::isfinite(radius_hint))
    throw std::invalid_argument("fit_eyeball_model: radius_hint must be positive and finite");
  for (std::size_t i = kFitBegin; i < kFitEnd; ++i) {
    const auto& pt = landmarks[i];
    if (!std::isfinite(pt.u) || !std::isfinite(pt.v) || pt.u < 0.0 || pt.v < 0.0 || pt.u > dims.width - 1.0 ||
        pt.v > dims.height - 1.0)
      throw std::invalid_argument("fit_eyeball_model: landmark " + std::to_string(i) + " is outside the image");
  }

  ParamVec p;
  p << 0.0, 0.0, dims.width / 2.0, dims.height / 2.0, radius_hint;
  ResidualVec r = residual(p, landmarks);
  double cost = r.squaredNorm();

  FitResult out;
  out.accepted_costs.push_back(cost);
  auto finish = [&](bool converged) {
    // angles reported in their principal range; the direction is unchanged
    out.gaze = eye::vector_to_gaze(eye::gaze_to_vector(gaze_of(p)));
    out.eyeball = eyeball_of(p);
    out.residual_rms = std::sqrt(cost / kResiduals);
    out.converged = converged;
    return out;
  };
  if (degenerate(landmarks)) return finish(false);

  double lambda = opts.initial_lambda;
  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    out.iterations = iter;
    const Jacobian J = jacobian(p, landmarks);
    const Eigen::Matrix<double, kParams, kParams> JtJ = J.transpose() * J;
    const ParamVec grad = J.transpose() * r;
    Eigen::Matrix<double, kParams, kParams> A = JtJ;
    for (int j = 0; j < kParams; ++j) A(j, j) += lambda * std::max(JtJ(j, j), 1e-12);
    const ParamVec step = A.ldlt().solve(-grad);
    if (!step.allFinite()) return finish(false);
    const double step_norm = step.norm();

    const ParamVec trial = p + step;
    const ResidualVec trial_r = residual(trial, landmarks);
    const double trial_cost = trial_r.squaredNorm();
    if (trial[4] > 0.0 && std::isfinite(trial_cost) && trial_cost <= cost) {
      const double decrease = cost - trial_cost;
      p = trial;
      r = trial_r;
      cost = trial_cost;
      out.accepted_costs.push_back(cost);
      lambda *= opts.lambda_down;
      if (step_norm < opts.step_tolerance || decrease < opts.residual_tolerance) return finish(true);
    } else {
      lambda *= opts.lambda_up;
      if (step_norm < opts.step_tolerance) return finish(true);
    }
  }
  return finish(false);
}

}  // namespace gzk::est

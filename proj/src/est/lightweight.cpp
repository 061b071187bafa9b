#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "gzk/estimators.hpp"

namespace gzk::est {

FeatureVector lightweight_features(const LandmarkSet& lm, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("lightweight_features: radius must be positive");
  FeatureVector f{};
  double cu = 0, cv = 0;
  for (const auto& p : lm) {
    cu += p.u;
    cv += p.v;
  }
  cu /= eye::kNumLandmarks;
  cv /= eye::kNumLandmarks;
  for (std::size_t i = 0; i < eye::kNumLandmarks; ++i) {
    f[2 * i] = (lm[i].u - cu) / radius;
    f[2 * i + 1] = (lm[i].v - cv) / radius;
  }
  f[36] = radius;

  // invert the iris-centre offset c + r' (-sin y cos p, -sin p)
  const double r_prime = radius * eye::iris_plane_ratio();
  const auto& iris = lm[eye::kIrisCenter];
  const auto& ball = lm[eye::kEyeballCenter];
  const double pitch = std::asin(std::clamp(-(iris.v - ball.v) / r_prime, -1.0, 1.0));
  const double yaw = std::asin(std::clamp(-(iris.u - ball.u) / (r_prime * std::cos(pitch)), -1.0, 1.0));
  f[37] = pitch;
  f[38] = yaw;

  const double upper = (lm[1].v + lm[2].v + lm[3].v) / 3.0;
  const double lower = (lm[5].v + lm[6].v + lm[7].v) / 3.0;
  f[39] = (lower - upper) / radius;
  return f;
}

LightweightModel fit_ridge(std::span<const FeatureVector> features, std::span<const GazeAngles> targets,
                           double lambda) {
  constexpr auto D = static_cast<Eigen::Index>(kLightweightFeatures);
  if (features.size() != targets.size()) throw std::invalid_argument("fit_ridge: feature and target counts differ");
  if (features.size() < kLightweightFeatures)
    throw std::invalid_argument("fit_ridge: needs at least " + std::to_string(kLightweightFeatures) + " samples, got " +
                                std::to_string(features.size()));
  if (!(lambda >= 0.0)) throw std::invalid_argument("fit_ridge: lambda must be non-negative");

  LightweightModel model;
  model.lambda = lambda;
  const auto n = static_cast<double>(features.size());
  for (const auto& x : features)
    for (std::size_t j = 0; j < kLightweightFeatures; ++j) model.feature_mean[j] += x[j];
  for (double& m : model.feature_mean) m /= n;
  for (const auto& x : features)
    for (std::size_t j = 0; j < kLightweightFeatures; ++j) {
      const double d = x[j] - model.feature_mean[j];
      model.feature_scale[j] += d * d;
    }
  for (std::size_t j = 0; j < kLightweightFeatures; ++j) {
    const double sd = std::sqrt(model.feature_scale[j] / n);
    if (sd > 1e-12) {
      model.feature_scale[j] = sd;
    } else {
      model.feature_scale[j] = 1.0;
      model.warnings.push_back("feature " + std::to_string(j) + " is constant over the training set");
    }
  }
  std::array<double, 2> y_mean{0.0, 0.0};
  for (const auto& g : targets) {
    y_mean[0] += g.pitch;
    y_mean[1] += g.yaw;
  }
  y_mean[0] /= n;
  y_mean[1] /= n;

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(D, D);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(D, 2);
  Eigen::VectorXd z(D);
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (Eigen::Index j = 0; j < D; ++j) {
      const auto k = static_cast<std::size_t>(j);
      z[j] = (features[i][k] - model.feature_mean[k]) / model.feature_scale[k];
    }
    gram.selfadjointView<Eigen::Lower>().rankUpdate(z);
    rhs.col(0) += z * (targets[i].pitch - y_mean[0]);
    rhs.col(1) += z * (targets[i].yaw - y_mean[1]);
  }
  gram = gram.selfadjointView<Eigen::Lower>();

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double max_eig = eig.eigenvalues().maxCoeff(), min_eig = eig.eigenvalues().minCoeff();
  if (min_eig <= 1e-10 * max_eig)
    model.warnings.push_back("feature matrix is rank deficient (eigenvalue ratio " + std::to_string(min_eig / max_eig) +
                             "); ridge term determines the null-space weights");

  gram.diagonal().array() += lambda;
  const Eigen::MatrixXd w = gram.ldlt().solve(rhs);
  for (std::size_t k = 0; k < 2; ++k) {
    for (Eigen::Index j = 0; j < D; ++j) model.weights[k][static_cast<std::size_t>(j)] = w(j, static_cast<Eigen::Index>(k));
    model.intercept[k] = y_mean[k];
  }
  return model;
}

LightweightModel train_lightweight(std::span<const LightweightSample> samples, double lambda) {
  std::vector<FeatureVector> x;
  std::vector<GazeAngles> y;
  x.reserve(samples.size());
  y.reserve(samples.size());
  for (const auto& s : samples) {
    x.push_back(lightweight_features(s.landmarks, s.radius));
    y.push_back(s.gaze);
  }
  return fit_ridge(x, y, lambda);
}

GazeAngles predict_features(const LightweightModel& model, const FeatureVector& f) {
  std::array<double, 2> y = model.intercept;
  for (std::size_t j = 0; j < kLightweightFeatures; ++j) {
    const double z = (f[j] - model.feature_mean[j]) / model.feature_scale[j];
    y[0] += model.weights[0][j] * z;
    y[1] += model.weights[1][j] * z;
  }
  return {y[0], y[1]};
}

GazeAngles predict_lightweight(const LightweightModel& model, const LandmarkSet& landmarks, double radius) {
  return predict_features(model, lightweight_features(landmarks, radius));
}

GazeAngles PersonalCalibration::apply(GazeAngles g) const {
  return {affine[0] * g.pitch + affine[1] * g.yaw + bias[0], affine[2] * g.pitch + affine[3] * g.yaw + bias[1]};
}

PersonalCalibration calibrate_personal(std::span<const GazeAngles> predictions, std::span<const GazeAngles> truths,
                                       int subject_id) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument("calibrate_personal: prediction and truth counts differ");
  PersonalCalibration c;
  c.subject_id = subject_id;
  const auto n = static_cast<Eigen::Index>(predictions.size());
  c.n_samples_used = static_cast<int>(n);
  if (n == 0) return c;

  Eigen::MatrixXd target(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    target(i, 0) = truths[k].pitch;
    target(i, 1) = truths[k].yaw;
  }
  if (n >= kAffineMinSamples) {
    Eigen::MatrixXd design(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      design.row(i) << predictions[k].pitch, predictions[k].yaw, 1.0;
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() == 3) {
      const Eigen::MatrixXd coef = qr.solve(target);
      c.affine = {coef(0, 0), coef(1, 0), coef(0, 1), coef(1, 1)};
      c.bias = {coef(2, 0), coef(2, 1)};
      return c;
    }
  }
  // bias only: mean residual
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    c.bias[0] += target(i, 0) - predictions[k].pitch;
    c.bias[1] += target(i, 1) - predictions[k].yaw;
  }
  c.bias[0] /= static_cast<double>(n);
  c.bias[1] /= static_cast<double>(n);
  return c;
}

std::string exact_decimal(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_decimal(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a decimal number: '" + s + "'");
  return v;
}

namespace {

template <std::size_t N>
nlohmann::json decimals(const std::array<double, N>& a) {
  nlohmann::json out = nlohmann::json::array();
  for (double v : a) out.push_back(exact_decimal(v));
  return out;
}

template <std::size_t N>
std::array<double, N> parse_array(const nlohmann::json& j, const char* key) {
  const auto& arr = j.at(key);
  if (!arr.is_array() || arr.size() != N)
    throw std::invalid_argument(std::string("expected ") + std::to_string(N) + " entries in '" + key + "'");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_decimal(arr[i].get<std::string>());
  return out;
}

}  // namespace

nlohmann::json to_json(const LightweightModel& m) {
  return {{"kind", "lightweight"},
          {"n_features", kLightweightFeatures},
          {"lambda", exact_decimal(m.lambda)},
          {"feature_mean", decimals(m.feature_mean)},
          {"feature_scale", decimals(m.feature_scale)},
          {"weights_pitch", decimals(m.weights[0])},
          {"weights_yaw", decimals(m.weights[1])},
          {"intercept", decimals(m.intercept)},
          {"warnings", m.warnings}};
}

LightweightModel lightweight_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "lightweight" || j.at("n_features").get<std::size_t>() != kLightweightFeatures)
    throw std::invalid_argument("not a 40-feature lightweight model");
  LightweightModel m;
  m.lambda = parse_decimal(j.at("lambda").get<std::string>());
  m.feature_mean = parse_array<kLightweightFeatures>(j, "feature_mean");
  m.feature_scale = parse_array<kLightweightFeatures>(j, "feature_scale");
  m.weights[0] = parse_array<kLightweightFeatures>(j, "weights_pitch");
  m.weights[1] = parse_array<kLightweightFeatures>(j, "weights_yaw");
  m.intercept = parse_array<2>(j, "intercept");
  m.warnings = j.value("warnings", std::vector<std::string>{});
  return m;
}

nlohmann::json to_json(const PersonalCalibration& c) {
  return {{"kind", "personal_calibration"},
          {"subject_id", c.subject_id},
          {"n_samples_used", c.n_samples_used},
          {"bias", decimals(c.bias)},
          {"affine", decimals(c.affine)}};
}

PersonalCalibration calibration_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "personal_calibration") throw std::invalid_argument("not a personal calibration");
  PersonalCalibration c;
  c.subject_id = j.at("subject_id").get<int>();
  c.n_samples_used = j.at("n_samples_used").get<int>();
  c.bias = parse_array<2>(j, "bias");
  c.affine = parse_array<4>(j, "affine");
  return c;
}

}  // namespace gzk::est

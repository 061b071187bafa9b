#pragma once

// Held-out evaluation of a gaze pipeline: per-sample predictions, MAE figures,
// JSON reports and CSV tables with the published reference rows alongside.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gzk/dataset.hpp"
#include "gzk/estimators.hpp"
#include "gzk/networks.hpp"

namespace gzk::harness {

enum class Pipeline { network, fit, lightweight, with_calibration, constant };

std::string to_string(Pipeline p);
Pipeline pipeline_from_string(const std::string& s);

struct EvalEntry {
  eye::GazeAngles truth;
  eye::GazeAngles prediction;
  std::int32_t subject = 0;
  std::int64_t index = 0;  // dataset index
};

struct EvalReport {
  std::string model_id;
  std::string pipeline;
  std::int64_t n_samples = 0;
  double mae_pitch_deg = 0.0;
  double mae_yaw_deg = 0.0;
  double mae_angular_deg = 0.0;
  std::vector<EvalEntry> per_sample;
};

/// MAE_pitch = mean |dpitch| in degrees, likewise yaw; MAE_angular is the
/// mean angular_error_deg.
EvalReport make_report(std::string model_id, std::string pipeline, std::vector<EvalEntry> entries);

struct LandmarkPrediction {
  eye::LandmarkSet landmarks;
  double radius = 0.0;
};

/// Eval-mode forward passes in batches; soft-argmax of the last stack.
std::vector<LandmarkPrediction> predict_landmarks(nn::LandmarkNet<float>& net, const eye::Dataset& data,
                                                  std::span<const std::size_t> indices, int batch_size = 16);
std::vector<eye::GazeAngles> predict_gaze(nn::GazemapNet<float>& net, const eye::Dataset& data,
                                          std::span<const std::size_t> indices, int batch_size = 16);

struct EvalOptions {
  Pipeline pipeline = Pipeline::network;
  /// Base estimator under with-calibration (network, fit or lightweight).
  Pipeline calibrated = Pipeline::fit;
  /// Gazemap checkpoint for network; landmark checkpoint for fit and
  /// lightweight, where an empty path means ground-truth landmarks.
  std::filesystem::path checkpoint;
  std::filesystem::path lightweight_model;  // lightweight.json
  std::string split = "test";               // train | val | test | heldout (val+test) | all
  int calibration_samples = est::kAffineMinSamples;
  std::int64_t limit = 0;  // first n samples of the split; 0 = all
  std::string model_id;    // defaults to the checkpoint stem
};

/// Indices of a named split.
std::vector<std::size_t> eval_indices(const eye::Dataset& data, const std::string& split);

/// Runs the pipeline over the split. Under with-calibration the first
/// calibration_samples of every subject (in dataset order) fit the
/// correction and only the remaining samples are scored.
EvalReport evaluate(const EvalOptions& opts, const eye::Dataset& data);

/// Median over samples of the mean landmark distance in pixels.
double median_landmark_error(std::span<const LandmarkPrediction> predicted, const eye::Dataset& data,
                             std::span<const std::size_t> indices);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

/// One row of a results table. source is "desk" for runs made here and
/// "published" for the published figures, which are annotations only.
struct TableRow {
  std::string source;
  std::string study;
  std::string parameters;
  std::string model_id;
  std::string pipeline;
  std::int64_t n_samples = 0;
  std::optional<double> mae_pitch_deg;
  std::optional<double> mae_yaw_deg;
  double mae_angular_deg = 0.0;
};

inline constexpr const char* kTableHeader =
    "source,study,parameters,model_id,pipeline,n_samples,mae_pitch_deg,mae_yaw_deg,mae_angular_deg";

TableRow table_row(const EvalReport& report, std::string study, std::string parameters);
/// Published MAE figures for the hourglass and gazemap studies.
std::vector<TableRow> published_reference_rows();
std::string format_table_row(const TableRow& row);
void write_table(const std::filesystem::path& path, std::span<const TableRow> rows);

}  // namespace gzk::harness

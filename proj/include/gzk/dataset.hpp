#pragma once

// Seeded synthetic eye samples and the on-disk dataset format
// (meta.json + fixed-size little-endian records in samples.bin).

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "gzk/eye.hpp"
#include "gzk/render.hpp"

namespace gzk::eye {

struct SamplingRanges {
  double pitch_max = 0.7;  // radians, uniform in [-max, max]
  double yaw_max = 0.7;
  double radius_min = 16.0;  // pixels
  double radius_max = 24.0;
  double center_jitter = 2.0;  // pixels, uniform per axis
  double openness_min = 0.8;
  double openness_max = 1.1;
  double brightness_jitter = 0.1;  // relative
  double noise_sigma = 0.02;
  int n_subjects = 20;

  void validate() const;
};

struct EyeSample {
  std::vector<float> image;  // H x W
  LandmarkSet landmarks;
  GazeAngles gaze;
  EyeballParams eyeball;
  std::int32_t subject_id = 0;
  std::int64_t seed = 0;
};

struct DatasetMeta {
  int format_version = 1;
  Dims dims;
  double sigma = kDefaultHeatmapSigma;
  std::int64_t count = 0;
  std::uint64_t seed = 0;
  SamplingRanges ranges;
  std::int64_t rejections = 0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<EyeSample> samples;
};

/// Per-subject appearance and eye-shape traits, fixed by (dataset seed, subject).
Appearance subject_appearance(std::uint64_t dataset_seed, int subject, const SamplingRanges& ranges);

struct SampleDraw {
  EyeParams params;
  LandmarkSet landmarks;
  int subject = 0;
  std::uint64_t seed = 0;
};

/// Geometry and appearance of sample `index`. Draws whose landmarks leave the
/// image are redrawn; `rejections` counts them.
SampleDraw draw_sample(std::uint64_t dataset_seed, std::int64_t index, const SamplingRanges& ranges, Dims dims,
                       int* rejections = nullptr);

/// draw_sample followed by rendering; labels are rounded to stored precision.
EyeSample generate_sample(std::uint64_t dataset_seed, std::int64_t index, const SamplingRanges& ranges, Dims dims,
                          int* rejections = nullptr);

/// Samples are generated in parallel; the result depends only on the arguments.
Dataset generate_dataset(std::int64_t n, std::uint64_t seed, const SamplingRanges& ranges, Dims dims = {},
                         double sigma = kDefaultHeatmapSigma);

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

enum class Split { train, val, test };

/// 80/10/10 by subject: subject_id mod 10 in [0,8) train, 8 val, 9 test.
Split split_of(std::int32_t subject_id);
std::vector<std::size_t> split_indices(const Dataset& dataset, Split split);

/// Rounds through float so in-memory samples equal what the file stores.
float to_stored(double v);

nlohmann::json to_json(const SamplingRanges& ranges);
SamplingRanges ranges_from_json(const nlohmann::json& j);

}  // namespace gzk::eye

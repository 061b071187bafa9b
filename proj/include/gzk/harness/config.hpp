#pragma once

// Training configuration and its JSON form. Unknown keys are rejected so a
// typo in a config file fails loudly instead of silently using a default.

#include <cstdint>
#include <string>

#include "json.hpp"

#include "gzk/losses.hpp"
#include "gzk/networks.hpp"

namespace gzk::harness {

enum class ModelKind { landmark, gazemap, lightweight };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct AugmentConfig {
  bool enabled = true;
  int max_translate = 4;  // pixels, integer shift per axis in [-max, max]
  double scale_min = 0.9;
  double scale_max = 1.1;
  int max_tries = 10;
};

struct TrainConfig {
  ModelKind model = ModelKind::landmark;
  nn::HourglassConfig hourglass;
  nn::DenseNetConfig densenet;
  double base_lr = 1e-4;
  int lr_decay_every = 5000;
  double lr_decay_factor = 0.1;
  int batch_size = 16;
  int max_steps = 2000;
  int max_epochs = 99;
  std::uint64_t seed = 0;
  losses::LossWeights weights;
  AugmentConfig augment;
  std::string dataset;                // dataset directory
  std::string split = "train";        // train | all
  std::string out_dir = "run";        // log, checkpoints, status
  int checkpoint_every = 1000;
  std::string landmark_checkpoint;    // lightweight only: features from this network instead of labels

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);

/// Fields absent from `j` keep the values of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

/// Recursive merge of `patch` into `target`; objects merge, anything else replaces.
void merge_json(nlohmann::json& target, const nlohmann::json& patch);

}  // namespace gzk::harness

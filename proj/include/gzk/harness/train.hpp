#pragma once

// Training loop: deterministic batches, Adam, stepwise learning-rate decay,
// CSV logging, periodic checkpoints and bit-exact resume.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gzk/checkpoint.hpp"
#include "gzk/dataset.hpp"
#include "gzk/harness/config.hpp"
#include "gzk/networks.hpp"

namespace gzk::harness {

/// base_lr * factor^floor(step / decay_every)
double lr_schedule(int step, const TrainConfig& cfg);

inline constexpr const char* kLogHeader = "step,lr,loss_total,loss_hm,loss_rad,loss_gaze,loss_gm,wall_ms";

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over named float parameters; moments are tensors so they checkpoint
/// alongside the weights.
class Adam {
 public:
  Adam(std::vector<NamedTensor<float>> params, AdamHyper hyper = {});

  /// One update from the current gradients; parameters without a gradient
  /// are left untouched.
  void step(double lr);
  void zero_grad();

  std::int64_t steps_taken() const { return t_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }
  /// "adam.m.<name>" and "adam.v.<name>" sharing storage with the optimizer.
  std::vector<NamedTensor<float>> state();

 private:
  std::vector<NamedTensor<float>> params_;
  std::vector<Tensor<float>> m_, v_;
  AdamHyper hyper_;
  std::int64_t t_ = 0;
};

/// Batch-leading tensors for one step; unused targets stay undefined.
struct Batch {
  Tensor<float> images;    // [B, 1, H, W]
  Tensor<float> heatmaps;  // [B, 18, H, W]
  Tensor<float> radius;    // [B, 1]
  Tensor<float> gaze;      // [B, 2]
  Tensor<float> gazemaps;  // [B, 3, H, W] one-hot
};

/// Samples `indices` of the dataset, each augmented with its own seed when
/// `augment` is non-null, and renders the targets the model needs.
Batch make_batch(const eye::Dataset& data, std::span<const std::size_t> indices, ModelKind model,
                 const AugmentConfig* augment, std::span<const std::uint64_t> seeds);

/// Dataset indices of step `step`: a seeded permutation per epoch, partial
/// final batches dropped.
std::vector<std::size_t> batch_indices(std::span<const std::size_t> pool, int batch_size, std::uint64_t seed,
                                       int step);

struct StepLog {
  int step = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_hm = 0.0;
  double loss_rad = 0.0;
  double loss_gaze = 0.0;
  double loss_gm = 0.0;
  double wall_ms = 0.0;
};

std::string format_log_line(const StepLog& s);
/// Parses a log written by train(); throws on a header mismatch.
std::vector<StepLog> read_log(const std::filesystem::path& path);

struct TrainResult {
  int steps_completed = 0;
  std::vector<StepLog> log;  // steps run by this call
  std::filesystem::path final_checkpoint;
};

/// Raised when a loss becomes non-finite; the step is also in status.json.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(int step, const std::string& what) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Trains cfg.model into cfg.out_dir. With `resume_from`, weights, optimizer
/// moments and the step counter come from that checkpoint and the log is
/// truncated to the steps before it.
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& resume_from = {});

/// Networks restored from a training checkpoint.
nn::LandmarkNet<float> load_landmark_net(const std::filesystem::path& checkpoint);
nn::GazemapNet<float> load_gazemap_net(const std::filesystem::path& checkpoint);
ModelKind checkpoint_model_kind(const std::filesystem::path& checkpoint);

}  // namespace gzk::harness

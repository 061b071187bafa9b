#pragma once

// Training objectives. Every term is a per-sample sum averaged over the batch,
// so a batch of one reproduces the single-sample definitions exactly.

#include <vector>

#include "gzk/networks.hpp"

namespace gzk::losses {

struct LossWeights {
  double alpha_hm = 1.0;
  double beta_rad = 1e-7;
  double alpha_gm = 1e-5;
};

inline constexpr double kGazemapLogEps = 1e-12;

/// alpha * sum over maps and pixels of (pred - truth)^2; pred, truth [N,18,H,W].
template <typename T>
Tensor<T> loss_heatmaps(const Tensor<T>& pred, const Tensor<T>& truth, double alpha_hm);

/// beta * (pred - truth)^2; pred, truth [N,1].
template <typename T>
Tensor<T> loss_radius(const Tensor<T>& pred, const Tensor<T>& truth, double beta_rad);

/// Squared distance on (pitch, yaw); pred, truth [N,2].
template <typename T>
Tensor<T> loss_gaze(const Tensor<T>& pred, const Tensor<T>& truth);

/// -alpha * sum_p sum_class m log(softmax(logits) + eps); logits, one-hot truth [N,3,H,W].
template <typename T>
Tensor<T> loss_gazemap(const Tensor<T>& logits, const Tensor<T>& truth_one_hot, double alpha_gm);

/// A scalar objective with its components kept for logging.
template <typename T>
struct Objective {
  Tensor<T> total;
  std::vector<Tensor<T>> terms;  // heatmap terms per stack then radius, or gaze then gazemap
  double heatmaps = 0.0;         // sum of the heatmap terms
  double radius = 0.0;
  double gaze = 0.0;
  double gazemap = 0.0;
};

/// Heatmap loss on every stack's output plus the radius loss.
template <typename T>
Objective<T> landmark_objective(const nn::LandmarkOutput<T>& out, const Tensor<T>& truth_heatmaps,
                                const Tensor<T>& truth_radius, const LossWeights& w);

/// Gaze loss plus the gazemap loss on the last module's logits.
template <typename T>
Objective<T> gazemap_objective(const nn::GazemapOutput<T>& out, const Tensor<T>& truth_gaze,
                               const Tensor<T>& truth_gazemap, const LossWeights& w);

}  // namespace gzk::losses

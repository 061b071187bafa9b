#pragma once

// Stacked-hourglass landmark network with a radius head, and the gazemap
// network (hourglass trunk emitting eye-region class maps, DenseNet regressor).

#include <filesystem>
#include <vector>

#include "gzk/checkpoint.hpp"
#include "gzk/eye.hpp"
#include "gzk/nn.hpp"
#include "gzk/render.hpp"
#include "json.hpp"

namespace gzk::nn {

struct HourglassConfig {
  int n_stacks = 2;
  int n_features = 32;
  int n_scales = 4;
  int n_landmarks = static_cast<int>(eye::kNumLandmarks);
  double temperature = ops::kDefaultSoftArgmaxTemperature;  // soft-argmax

  /// Throws std::invalid_argument for non-positive fields, odd feature counts,
  /// or image dims not divisible by 2^(n_scales - 1).
  void validate(eye::Dims dims) const;
};

struct DenseNetConfig {
  int n_blocks = 5;
  int layers_per_block = 5;
  int growth_rate = 8;
  double compression = 0.5;

  void validate(eye::Dims dims) const;
};

/// Initial bias of the radius output, in pixels (centre of the sampled range).
inline constexpr double kRadiusPrior = 20.0;

template <typename T>
struct LandmarkOutput {
  std::vector<Tensor<T>> heatmaps;  // per stack, [N, 18, H, W]
  Tensor<T> landmarks;              // [N, 18, 2] soft-argmax of the last stack
  Tensor<T> radius;                 // [N, 1]
};

template <typename T>
class LandmarkNet {
 public:
  LandmarkNet(const HourglassConfig& cfg, eye::Dims dims, std::uint64_t seed);

  /// images [N, 1, H, W]
  LandmarkOutput<T> forward(const Tensor<T>& images, Mode mode);
  void visit(const Visitor<T>& v);

  const HourglassConfig& config() const { return cfg_; }
  eye::Dims dims() const { return dims_; }

 private:
  struct Stack {
    Hourglass<T> hourglass;
    Residual<T> post;
    Conv2d<T> features;
    BatchNorm<T> features_bn;
    Conv2d<T> heatmaps;
    Conv2d<T> merge_features;  // absent after the last stack
    Conv2d<T> merge_heatmaps;
  };

  HourglassConfig cfg_;
  eye::Dims dims_;
  Conv2d<T> stem_conv_;
  BatchNorm<T> stem_bn_;
  Residual<T> stem_res_;
  std::vector<Stack> stacks_;
  std::vector<Linear<T>> radius_fc_;
  std::vector<BatchNorm<T>> radius_bn_;
  Linear<T> radius_out_;
};

template <typename T>
struct GazemapOutput {
  std::vector<Tensor<T>> gazemaps;  // logits [N, 3, H, W]; last module only
  Tensor<T> gaze;                   // [N, 2] (pitch, yaw)
};

inline constexpr int kGazemapModules = 3;

template <typename T>
class GazemapNet {
 public:
  GazemapNet(const HourglassConfig& hg, const DenseNetConfig& dn, eye::Dims dims, std::uint64_t seed);

  GazemapOutput<T> forward(const Tensor<T>& images, Mode mode);
  void visit(const Visitor<T>& v);

  /// Channel count after the stem and after each dense block / transition.
  const std::vector<Index>& channel_trace() const { return trace_; }
  const HourglassConfig& hourglass_config() const { return hg_; }
  const DenseNetConfig& densenet_config() const { return dn_; }
  eye::Dims dims() const { return dims_; }

 private:
  struct Module {
    Hourglass<T> hourglass;
    Residual<T> post;
    Conv2d<T> features;
    BatchNorm<T> features_bn;
    Conv2d<T> merge;  // absent after the last module
  };

  HourglassConfig hg_;
  DenseNetConfig dn_;
  eye::Dims dims_;
  Conv2d<T> stem_conv_;
  BatchNorm<T> stem_bn_;
  Residual<T> stem_res_;
  std::vector<Module> modules_;
  Conv2d<T> logits_;
  Conv2d<T> dense_stem_;
  std::vector<DenseBlock<T>> blocks_;
  std::vector<Transition<T>> transitions_;
  BatchNorm<T> final_bn_;
  Linear<T> gaze_out_;
  std::vector<Index> trace_;
};

nlohmann::json to_json(const HourglassConfig& cfg);
nlohmann::json to_json(const DenseNetConfig& cfg);
HourglassConfig hourglass_from_json(const nlohmann::json& j);
DenseNetConfig densenet_from_json(const nlohmann::json& j);

/// Parameters and buffers as named tensors, in visit order. The tensors share
/// storage with the network.
template <typename T, typename Net>
std::vector<NamedTensor<T>> state_of(Net& net) {
  std::vector<NamedTensor<T>> out;
  net.visit([&](const std::string& name, Tensor<T>& t, Role) { out.push_back({name, t}); });
  return out;
}

/// Copies checkpoint data into the network; every name must be present with
/// a matching shape.
template <typename T, typename Net>
void load_state(Net& net, const CheckpointData<T>& data) {
  net.visit([&](const std::string& name, Tensor<T>& t, Role) {
    const Tensor<T>& src = data.find(name);
    if (src.shape() != t.shape())
      throw ShapeError("checkpoint tensor " + name + " has shape " + to_string(src.shape()) + ", network expects " +
                       to_string(t.shape()));
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  });
}

}  // namespace gzk::nn

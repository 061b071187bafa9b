#include "gzk/networks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gzk::nn {

namespace {

void require_divisible(eye::Dims dims, int halvings, const char* what) {
  const int step = 1 << halvings;
  if (dims.height <= 0 || dims.width <= 0 || dims.height % step != 0 || dims.width % step != 0)
    throw std::invalid_argument(std::string(what) + ": image " + std::to_string(dims.height) + "x" +
                                std::to_string(dims.width) + " must be divisible by " + std::to_string(step));
}

}  // namespace

void HourglassConfig::validate(eye::Dims dims) const {
  if (n_stacks < 1) throw std::invalid_argument("n_stacks must be at least 1");
  if (n_features < 2 || n_features % 2 != 0) throw std::invalid_argument("n_features must be even and positive");
  if (n_scales < 2) throw std::invalid_argument("n_scales must be at least 2");
  if (n_landmarks != static_cast<int>(eye::kNumLandmarks)) throw std::invalid_argument("n_landmarks must be 18");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("temperature must be positive");
  require_divisible(dims, n_scales - 1, "hourglass");
}

void DenseNetConfig::validate(eye::Dims dims) const {
  if (n_blocks < 1 || layers_per_block < 1 || growth_rate < 1)
    throw std::invalid_argument("dense blocks, layers and growth rate must be positive");
  if (compression != 0.5) throw std::invalid_argument("transition compression is fixed at 0.5");
  require_divisible(dims, n_blocks - 1, "densenet");
}

template <typename T>
LandmarkNet<T>::LandmarkNet(const HourglassConfig& cfg, eye::Dims dims, std::uint64_t seed) : cfg_(cfg), dims_(dims) {
  cfg.validate(dims);
  Rng rng(seed);
  const Index c = cfg.n_features, k = cfg.n_landmarks;
  stem_conv_ = Conv2d<T>(1, c, 7, false, rng);
  stem_bn_ = BatchNorm<T>(c);
  stem_res_ = Residual<T>(c, rng);
  for (int s = 0; s < cfg.n_stacks; ++s) {
    Stack st;
    st.hourglass = Hourglass<T>(cfg.n_scales - 1, c, rng);
    st.post = Residual<T>(c, rng);
    st.features = Conv2d<T>(c, c, 1, false, rng);
    st.features_bn = BatchNorm<T>(c);
    st.heatmaps = Conv2d<T>(c, k, 1, true, rng);
    // heatmap heads start at zero output: targets are ~0 off the peaks
    std::fill(st.heatmaps.weight.mutable_data().begin(), st.heatmaps.weight.mutable_data().end(), T(0));
    if (s + 1 < cfg.n_stacks) {
      st.merge_features = Conv2d<T>(c, c, 1, true, rng);
      st.merge_heatmaps = Conv2d<T>(k, c, 1, true, rng);
    }
    stacks_.push_back(std::move(st));
  }
  Index in = 2 * k;
  for (int i = 0; i < 3; ++i) {
    radius_fc_.emplace_back(in, 100, rng);
    radius_bn_.emplace_back(100);
    in = 100;
  }
  radius_out_ = Linear<T>(100, 1, rng);
  radius_out_.bias.mutable_data()[0] = static_cast<T>(kRadiusPrior);
}

template <typename T>
LandmarkOutput<T> LandmarkNet<T>::forward(const Tensor<T>& images, Mode mode) {
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != dims_.height || images.dim(3) != dims_.width)
    throw ShapeError("landmark network expects [N,1," + std::to_string(dims_.height) + "," +
                     std::to_string(dims_.width) + "] images, got " + to_string(images.shape()));
  LandmarkOutput<T> out;
  Tensor<T> x = stem_res_(stem_bn_(stem_conv_(images), mode), mode);
  for (std::size_t s = 0; s < stacks_.size(); ++s) {
    Stack& st = stacks_[s];
    Tensor<T> h = st.post(st.hourglass(x, mode), mode);
    Tensor<T> f = st.features_bn(st.features(h), mode);
    Tensor<T> hm = st.heatmaps(f);
    out.heatmaps.push_back(hm);
    if (s + 1 < stacks_.size()) x = ops::add(ops::add(x, st.merge_features(f)), st.merge_heatmaps(hm));
  }
  const Index n = images.dim(0);
  out.landmarks = ops::soft_argmax(out.heatmaps.back(), T(cfg_.temperature));
  Tensor<T> r = ops::reshape(out.landmarks, {n, 2 * Index(cfg_.n_landmarks)});
  for (std::size_t i = 0; i < radius_fc_.size(); ++i) r = radius_bn_[i](radius_fc_[i](r), mode);
  out.radius = radius_out_(r);
  return out;
}

template <typename T>
void LandmarkNet<T>::visit(const Visitor<T>& v) {
  stem_conv_.visit("stem.conv", v);
  stem_bn_.visit("stem.bn", v);
  stem_res_.visit("stem.res", v);
  for (std::size_t s = 0; s < stacks_.size(); ++s) {
    const std::string p = "stack" + std::to_string(s);
    Stack& st = stacks_[s];
    st.hourglass.visit(join(p, "hourglass"), v);
    st.post.visit(join(p, "post"), v);
    st.features.visit(join(p, "features"), v);
    st.features_bn.visit(join(p, "features_bn"), v);
    st.heatmaps.visit(join(p, "heatmaps"), v);
    if (st.merge_features.weight.defined()) {
      st.merge_features.visit(join(p, "merge_features"), v);
      st.merge_heatmaps.visit(join(p, "merge_heatmaps"), v);
    }
  }
  for (std::size_t i = 0; i < radius_fc_.size(); ++i) {
    radius_fc_[i].visit("radius.fc" + std::to_string(i), v);
    radius_bn_[i].visit("radius.bn" + std::to_string(i), v);
  }
  radius_out_.visit("radius.out", v);
}

template <typename T>
GazemapNet<T>::GazemapNet(const HourglassConfig& hg, const DenseNetConfig& dn, eye::Dims dims, std::uint64_t seed)
    : hg_(hg), dn_(dn), dims_(dims) {
  hg.validate(dims);
  dn.validate(dims);
  Rng rng(seed);
  const Index c = hg.n_features;
  stem_conv_ = Conv2d<T>(1, c, 7, false, rng);
  stem_bn_ = BatchNorm<T>(c);
  stem_res_ = Residual<T>(c, rng);
  for (int m = 0; m < kGazemapModules; ++m) {
    Module mod;
    mod.hourglass = Hourglass<T>(hg.n_scales - 1, c, rng);
    mod.post = Residual<T>(c, rng);
    mod.features = Conv2d<T>(c, c, 1, false, rng);
    mod.features_bn = BatchNorm<T>(c);
    if (m + 1 < kGazemapModules) mod.merge = Conv2d<T>(c, c, 1, true, rng);
    modules_.push_back(std::move(mod));
  }
  logits_ = Conv2d<T>(c, eye::kGazemapClasses, 1, true, rng);
  const Index g = dn.growth_rate;
  Index channels = 2 * g;
  dense_stem_ = Conv2d<T>(eye::kGazemapClasses, channels, 3, false, rng);
  trace_.push_back(channels);
  for (int b = 0; b < dn.n_blocks; ++b) {
    blocks_.emplace_back(channels, dn.layers_per_block, g, rng);
    channels = blocks_.back().out_channels;
    trace_.push_back(channels);
    if (b + 1 < dn.n_blocks) {
      transitions_.emplace_back(channels, rng);
      channels = transitions_.back().out_channels;
      trace_.push_back(channels);
    }
  }
  final_bn_ = BatchNorm<T>(channels);
  gaze_out_ = Linear<T>(channels, 2, rng);
}

template <typename T>
GazemapOutput<T> GazemapNet<T>::forward(const Tensor<T>& images, Mode mode) {
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != dims_.height || images.dim(3) != dims_.width)
    throw ShapeError("gazemap network expects [N,1," + std::to_string(dims_.height) + "," +
                     std::to_string(dims_.width) + "] images, got " + to_string(images.shape()));
  GazemapOutput<T> out;
  Tensor<T> x = stem_res_(stem_bn_(stem_conv_(images), mode), mode);
  Tensor<T> f;
  for (std::size_t m = 0; m < modules_.size(); ++m) {
    Module& mod = modules_[m];
    f = mod.features_bn(mod.features(mod.post(mod.hourglass(x, mode), mode)), mode);
    if (m + 1 < modules_.size()) x = ops::add(x, mod.merge(f));
  }
  Tensor<T> logits = logits_(f);
  out.gazemaps.push_back(logits);
  Tensor<T> z = dense_stem_(ops::softmax_channels(logits));
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    z = blocks_[b](z, mode);
    if (b < transitions_.size()) z = transitions_[b](z, mode);
  }
  out.gaze = gaze_out_(ops::global_avg_pool(final_bn_(z, mode)));
  return out;
}

template <typename T>
void GazemapNet<T>::visit(const Visitor<T>& v) {
  stem_conv_.visit("stem.conv", v);
  stem_bn_.visit("stem.bn", v);
  stem_res_.visit("stem.res", v);
  for (std::size_t m = 0; m < modules_.size(); ++m) {
    const std::string p = "module" + std::to_string(m);
    Module& mod = modules_[m];
    mod.hourglass.visit(join(p, "hourglass"), v);
    mod.post.visit(join(p, "post"), v);
    mod.features.visit(join(p, "features"), v);
    mod.features_bn.visit(join(p, "features_bn"), v);
    if (mod.merge.weight.defined()) mod.merge.visit(join(p, "merge"), v);
  }
  logits_.visit("gazemap.logits", v);
  dense_stem_.visit("dense.stem", v);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].visit("dense.block" + std::to_string(b), v);
    if (b < transitions_.size()) transitions_[b].visit("dense.transition" + std::to_string(b), v);
  }
  final_bn_.visit("dense.final_bn", v);
  gaze_out_.visit("gaze.out", v);
}

nlohmann::json to_json(const HourglassConfig& c) {
  return {{"n_stacks", c.n_stacks}, {"n_features", c.n_features}, {"n_scales", c.n_scales},
          {"n_landmarks", c.n_landmarks}, {"temperature", c.temperature}};
}

nlohmann::json to_json(const DenseNetConfig& c) {
  return {{"n_blocks", c.n_blocks}, {"layers_per_block", c.layers_per_block}, {"growth_rate", c.growth_rate},
          {"compression", c.compression}};
}

HourglassConfig hourglass_from_json(const nlohmann::json& j) {
  HourglassConfig c;
  c.n_stacks = j.value("n_stacks", c.n_stacks);
  c.n_features = j.value("n_features", c.n_features);
  c.n_scales = j.value("n_scales", c.n_scales);
  c.n_landmarks = j.value("n_landmarks", c.n_landmarks);
  c.temperature = j.value("temperature", c.temperature);
  return c;
}

DenseNetConfig densenet_from_json(const nlohmann::json& j) {
  DenseNetConfig c;
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.layers_per_block = j.value("layers_per_block", c.layers_per_block);
  c.growth_rate = j.value("growth_rate", c.growth_rate);
  c.compression = j.value("compression", c.compression);
  return c;
}

template class LandmarkNet<float>;
template class LandmarkNet<double>;
template class GazemapNet<float>;
template class GazemapNet<double>;

}  // namespace gzk::nn

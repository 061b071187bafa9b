#include "gzk/harness/config.hpp"

#include <set>
#include <stdexcept>

namespace gzk::harness {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::landmark:
      return "landmark";
    case ModelKind::gazemap:
      return "gazemap";
    case ModelKind::lightweight:
      return "lightweight";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "landmark") return ModelKind::landmark;
  if (s == "gazemap") return ModelKind::gazemap;
  if (s == "lightweight") return ModelKind::lightweight;
  throw std::invalid_argument("model must be landmark, gazemap or lightweight, got '" + s + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (!(base_lr > 0.0)) fail("base_lr must be positive");
  if (lr_decay_every < 1) fail("lr_decay_every must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) fail("lr_decay_factor must lie in (0, 1)");
  if (batch_size < 1) fail("batch_size must be positive");
  if (max_steps < 1) fail("max_steps must be positive");
  if (max_epochs < 1 || max_epochs >= 100) fail("max_epochs must lie in [1, 99]");
  if (checkpoint_every < 1) fail("checkpoint_every must be positive");
  if (!(weights.alpha_hm >= 0.0 && weights.beta_rad >= 0.0 && weights.alpha_gm >= 0.0))
    fail("loss weights must be non-negative");
  if (augment.max_translate < 0) fail("augment.max_translate must be non-negative");
  if (!(augment.scale_min > 0.0 && augment.scale_min <= augment.scale_max)) fail("augment scale range is invalid");
  if (augment.max_tries < 1) fail("augment.max_tries must be positive");
  if (split != "train" && split != "all") fail("split must be train or all");
  if (dataset.empty()) fail("dataset path is required");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", to_string(c.model)},
          {"hourglass", nn::to_json(c.hourglass)},
          {"densenet", nn::to_json(c.densenet)},
          {"base_lr", c.base_lr},
          {"lr_decay_every", c.lr_decay_every},
          {"lr_decay_factor", c.lr_decay_factor},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed},
          {"weights", {{"alpha_hm", c.weights.alpha_hm}, {"beta_rad", c.weights.beta_rad}, {"alpha_gm", c.weights.alpha_gm}}},
          {"augment",
           {{"enabled", c.augment.enabled},
            {"max_translate", c.augment.max_translate},
            {"scale_min", c.augment.scale_min},
            {"scale_max", c.augment.scale_max},
            {"max_tries", c.augment.max_tries}}},
          {"dataset", c.dataset},
          {"split", c.split},
          {"out_dir", c.out_dir},
          {"checkpoint_every", c.checkpoint_every},
          {"landmark_checkpoint", c.landmark_checkpoint}};
}

namespace {

void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: " + (where.empty() ? "root" : where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + where + key + "'");
    if (known[key].is_object())
      reject_unknown(value, known[key], where + key + ".");
  }
}

}  // namespace

void merge_json(nlohmann::json& target, const nlohmann::json& patch) {
  if (!patch.is_object() || !target.is_object()) {
    target = patch;
    return;
  }
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && target.contains(key) && target[key].is_object())
      merge_json(target[key], value);
    else
      target[key] = value;
  }
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base) {
  nlohmann::json full = to_json(base);
  reject_unknown(j, full, "");
  merge_json(full, j);
  TrainConfig c;
  c.model = model_kind_from_string(full.at("model").get<std::string>());
  c.hourglass = nn::hourglass_from_json(full.at("hourglass"));
  c.densenet = nn::densenet_from_json(full.at("densenet"));
  c.base_lr = full.at("base_lr").get<double>();
  c.lr_decay_every = full.at("lr_decay_every").get<int>();
  c.lr_decay_factor = full.at("lr_decay_factor").get<double>();
  c.batch_size = full.at("batch_size").get<int>();
  c.max_steps = full.at("max_steps").get<int>();
  c.max_epochs = full.at("max_epochs").get<int>();
  c.seed = full.at("seed").get<std::uint64_t>();
  const auto& w = full.at("weights");
  c.weights = {w.at("alpha_hm").get<double>(), w.at("beta_rad").get<double>(), w.at("alpha_gm").get<double>()};
  const auto& a = full.at("augment");
  c.augment = {a.at("enabled").get<bool>(), a.at("max_translate").get<int>(), a.at("scale_min").get<double>(),
               a.at("scale_max").get<double>(), a.at("max_tries").get<int>()};
  c.dataset = full.at("dataset").get<std::string>();
  c.split = full.at("split").get<std::string>();
  c.out_dir = full.at("out_dir").get<std::string>();
  c.checkpoint_every = full.at("checkpoint_every").get<int>();
  c.landmark_checkpoint = full.at("landmark_checkpoint").get<std::string>();
  return c;
}

}  // namespace gzk::harness

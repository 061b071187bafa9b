#include "gzk/harness/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gzk/estimators.hpp"
#include "gzk/harness/augment.hpp"
#include "gzk/harness/eval.hpp"
#include "gzk/losses.hpp"
#include "gzk/random.hpp"

namespace gzk::harness {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kAugmentStream = 0x4147;

void write_status(const std::filesystem::path& dir, const nlohmann::json& status) {
  std::ofstream f(dir / "status.json");
  f << status.dump(2) << '\n';
}

template <typename Net>
void copy_model_state(Net& net, const CheckpointData<float>& data) {
  net.visit([&](const std::string& name, Tensor<float>& t, nn::Role) {
    const Tensor<float>& src = data.find("model." + name);
    if (src.shape() != t.shape())
      throw ShapeError("checkpoint tensor model." + name + " has shape " + gzk::to_string(src.shape()) +
                       ", network expects " + gzk::to_string(t.shape()));
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  });
}

template <typename Net>
std::vector<NamedTensor<float>> parameters_of(Net& net) {
  std::vector<NamedTensor<float>> out;
  net.visit([&](const std::string& name, Tensor<float>& t, nn::Role role) {
    if (role == nn::Role::parameter) out.push_back({name, t});
  });
  return out;
}

/// Config fields that must agree between a checkpoint and the run resuming it.
nlohmann::json resume_identity(const TrainConfig& cfg) {
  nlohmann::json j = to_json(cfg);
  for (const char* k : {"max_steps", "max_epochs", "out_dir", "checkpoint_every", "dataset"}) j.erase(k);
  return j;
}

std::vector<std::size_t> training_pool(const eye::Dataset& data, const std::string& split) {
  if (split == "all") {
    std::vector<std::size_t> all(data.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  return eye::split_indices(data, eye::Split::train);
}

TrainResult train_lightweight_model(const TrainConfig& cfg, const eye::Dataset& data,
                                    const std::vector<std::size_t>& pool) {
  std::vector<est::LightweightSample> samples;
  samples.reserve(pool.size());
  if (!cfg.landmark_checkpoint.empty()) {
    auto net = load_landmark_net(cfg.landmark_checkpoint);
    const auto predicted = predict_landmarks(net, data, pool);
    for (std::size_t k = 0; k < pool.size(); ++k)
      samples.push_back({predicted[k].landmarks, predicted[k].radius, data.samples[pool[k]].gaze});
  } else {
    for (std::size_t i : pool) {
      const auto& s = data.samples[i];
      samples.push_back({s.landmarks, s.eyeball.radius, s.gaze});
    }
  }
  const auto model = est::train_lightweight(samples);
  const auto path = std::filesystem::path(cfg.out_dir) / "lightweight.json";
  std::ofstream(path) << est::to_json(model).dump(2) << '\n';
  write_status(cfg.out_dir, {{"status", "completed"}, {"model", "lightweight"}, {"samples", samples.size()},
                             {"warnings", model.warnings}});
  TrainResult r;
  r.final_checkpoint = path;
  return r;
}

template <typename Net, typename Objective>
TrainResult run(const TrainConfig& cfg, const eye::Dataset& data, const std::vector<std::size_t>& pool, Net& net,
                Objective&& objective, const std::filesystem::path& resume_from) {
  const std::filesystem::path out_dir = cfg.out_dir;
  const int steps_per_epoch = static_cast<int>(pool.size()) / cfg.batch_size;
  const int total_steps = std::min<std::int64_t>(cfg.max_steps, std::int64_t{cfg.max_epochs} * steps_per_epoch);

  Adam adam(parameters_of(net));
  int start = 0;
  if (!resume_from.empty()) {
    const auto ckpt = load_checkpoint<float>(resume_from);
    const auto saved = train_config_from_json(ckpt.meta.at("config"));
    if (resume_identity(saved) != resume_identity(cfg))
      throw std::invalid_argument("resume: checkpoint " + resume_from.string() +
                                  " was written by a run with a different configuration");
    copy_model_state(net, ckpt);
    for (auto& [name, t] : adam.state()) {
      const auto& src = ckpt.find(name);
      std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
    }
    adam.set_steps_taken(ckpt.meta.at("adam_steps").get<std::int64_t>());
    start = ckpt.meta.at("step").get<int>();
  }

  // keep earlier log lines on resume, drop any written after the checkpoint
  const auto log_path = out_dir / "log.csv";
  std::vector<StepLog> earlier;
  if (start > 0 && std::filesystem::exists(log_path))
    for (const auto& s : read_log(log_path))
      if (s.step < start) earlier.push_back(s);
  std::ofstream log(log_path, std::ios::trunc);
  log << kLogHeader << '\n';
  for (const auto& s : earlier) log << format_log_line(s) << '\n';
  log.flush();

  auto save = [&](const std::filesystem::path& path, int step) {
    std::vector<NamedTensor<float>> tensors;
    net.visit([&](const std::string& name, Tensor<float>& t, nn::Role) { tensors.push_back({"model." + name, t}); });
    for (auto& nt : adam.state()) tensors.push_back(nt);
    save_checkpoint(path, tensors,
                    {{"model", to_string(cfg.model)},
                     {"step", step},
                     {"adam_steps", adam.steps_taken()},
                     {"config", to_json(cfg)},
                     {"height", data.meta.dims.height},
                     {"width", data.meta.dims.width},
                     {"sigma", data.meta.sigma}});
  };

  TrainResult result;
  const AugmentConfig* aug = cfg.augment.enabled ? &cfg.augment : nullptr;
  const std::uint64_t aug_seed = mix_seed(cfg.seed, kAugmentStream);
  for (int step = start; step < total_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(step, cfg);
    const auto idx = batch_indices(pool, cfg.batch_size, cfg.seed, step);
    std::vector<std::uint64_t> seeds(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j)
      seeds[j] = mix_seed(aug_seed, static_cast<std::uint64_t>(step) * idx.size() + j);
    const Batch batch = make_batch(data, idx, cfg.model, aug, seeds);

    const auto obj = objective(net, batch);
    const double total = obj.total.item();
    if (!std::isfinite(total)) {
      write_status(out_dir, {{"status", "aborted"}, {"step", step}, {"reason", "non-finite loss"}});
      throw TrainingAborted(step, "non-finite loss at step " + std::to_string(step));
    }
    obj.total.backward();
    adam.step(lr);
    adam.zero_grad();

    StepLog s{step, lr, total, obj.heatmaps, obj.radius, obj.gaze, obj.gazemap,
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()};
    log << format_log_line(s) << '\n';
    log.flush();
    result.log.push_back(s);
    if ((step + 1) % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%07d.gzk", step + 1);
      save(out_dir / name, step + 1);
    }
  }
  result.steps_completed = std::max(start, total_steps);
  result.final_checkpoint = out_dir / "final.gzk";
  save(result.final_checkpoint, result.steps_completed);
  write_status(out_dir, {{"status", "completed"}, {"step", result.steps_completed}});
  return result;
}

}  // namespace

double lr_schedule(int step, const TrainConfig& cfg) {
  if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
  return cfg.base_lr * std::pow(cfg.lr_decay_factor, step / cfg.lr_decay_every);
}

Adam::Adam(std::vector<NamedTensor<float>> params, AdamHyper hyper) : params_(std::move(params)), hyper_(hyper) {
  for (const auto& p : params_) {
    m_.push_back(Tensor<float>::zeros(p.tensor.shape()));
    v_.push_back(Tensor<float>::zeros(p.tensor.shape()));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(hyper_.beta1), b2 = static_cast<float>(hyper_.beta2);
  const float step_size = static_cast<float>(lr / c1), inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(hyper_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<float>& p = params_[k].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto m = m_[k].mutable_data();
    auto v = v_[k].mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<NamedTensor<float>> Adam::state() {
  std::vector<NamedTensor<float>> out;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.push_back({"adam.m." + params_[k].name, m_[k]});
    out.push_back({"adam.v." + params_[k].name, v_[k]});
  }
  return out;
}

std::vector<std::size_t> batch_indices(std::span<const std::size_t> pool, int batch_size, std::uint64_t seed,
                                       int step) {
  const int per_epoch = static_cast<int>(pool.size()) / batch_size;
  if (per_epoch < 1)
    throw std::invalid_argument("training pool of " + std::to_string(pool.size()) + " samples is smaller than batch " +
                                std::to_string(batch_size));
  const int epoch = step / per_epoch, slot = step % per_epoch;
  std::vector<std::size_t> order(pool.begin(), pool.end());
  Rng rng(mix_seed(mix_seed(seed, kShuffleStream), static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i)))]);
  const auto first = order.begin() + static_cast<std::ptrdiff_t>(slot) * batch_size;
  return {first, first + batch_size};
}

Batch make_batch(const eye::Dataset& data, std::span<const std::size_t> indices, ModelKind model,
                 const AugmentConfig* augment, std::span<const std::uint64_t> seeds) {
  const eye::Dims dims = data.meta.dims;
  const auto n = static_cast<Index>(indices.size());
  const std::size_t plane = static_cast<std::size_t>(dims.height) * static_cast<std::size_t>(dims.width);
  std::vector<float> images(static_cast<std::size_t>(n) * plane);
  std::vector<float> heatmaps(model == ModelKind::landmark ? static_cast<std::size_t>(n) * eye::kNumLandmarks * plane : 0);
  std::vector<float> gazemaps(model == ModelKind::gazemap ? static_cast<std::size_t>(n) * eye::kGazemapClasses * plane : 0);
  std::vector<float> radius(static_cast<std::size_t>(n)), gaze(2 * static_cast<std::size_t>(n));

#pragma omp parallel for schedule(static)
  for (Index j = 0; j < n; ++j) {
    const auto k = static_cast<std::size_t>(j);
    const eye::EyeSample& src = data.samples.at(indices[k]);
    const eye::EyeSample s = augment ? harness::augment(src, seeds[k], *augment, dims).sample : src;
    std::copy(s.image.begin(), s.image.end(), images.begin() + static_cast<std::ptrdiff_t>(k * plane));
    radius[k] = static_cast<float>(s.eyeball.radius);
    gaze[2 * k] = static_cast<float>(s.gaze.pitch);
    gaze[2 * k + 1] = static_cast<float>(s.gaze.yaw);
    if (model == ModelKind::landmark) {
      const auto maps = eye::render_heatmaps(s.landmarks, data.meta.sigma, dims);
      std::copy(maps.begin(), maps.end(), heatmaps.begin() + static_cast<std::ptrdiff_t>(k * maps.size()));
    } else if (model == ModelKind::gazemap) {
      const auto maps = eye::gazemap_one_hot(eye::render_gazemap(s.gaze, s.eyeball, dims), dims);
      std::copy(maps.begin(), maps.end(), gazemaps.begin() + static_cast<std::ptrdiff_t>(k * maps.size()));
    }
  }

  Batch b;
  b.images = Tensor<float>::from({n, 1, dims.height, dims.width}, std::move(images));
  b.radius = Tensor<float>::from({n, 1}, std::move(radius));
  b.gaze = Tensor<float>::from({n, 2}, std::move(gaze));
  if (model == ModelKind::landmark)
    b.heatmaps = Tensor<float>::from({n, static_cast<Index>(eye::kNumLandmarks), dims.height, dims.width},
                                     std::move(heatmaps));
  if (model == ModelKind::gazemap)
    b.gazemaps = Tensor<float>::from({n, eye::kGazemapClasses, dims.height, dims.width}, std::move(gazemaps));
  return b;
}

std::string format_log_line(const StepLog& s) {
  std::ostringstream os;
  os << s.step << ',' << est::exact_decimal(s.lr) << ',' << est::exact_decimal(s.loss_total) << ','
     << est::exact_decimal(s.loss_hm) << ',' << est::exact_decimal(s.loss_rad) << ',' << est::exact_decimal(s.loss_gaze)
     << ',' << est::exact_decimal(s.loss_gm) << ',' << est::exact_decimal(std::round(s.wall_ms * 1000.0) / 1000.0);
  return os.str();
}

std::vector<StepLog> read_log(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open log " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != kLogHeader) throw std::runtime_error(path.string() + ": unexpected log header");
  std::vector<StepLog> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) throw std::runtime_error(path.string() + ": malformed log line '" + line + "'");
    out.push_back({std::stoi(cells[0]), est::parse_decimal(cells[1]), est::parse_decimal(cells[2]),
                   est::parse_decimal(cells[3]), est::parse_decimal(cells[4]), est::parse_decimal(cells[5]),
                   est::parse_decimal(cells[6]), est::parse_decimal(cells[7])});
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const std::filesystem::path& resume_from) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const eye::Dataset data = eye::read_dataset(cfg.dataset);
  const auto pool = training_pool(data, cfg.split);
  std::ofstream(std::filesystem::path(cfg.out_dir) / "config.json") << to_json(cfg).dump(2) << '\n';
  if (cfg.model == ModelKind::lightweight) return train_lightweight_model(cfg, data, pool);

  if (cfg.model == ModelKind::landmark) {
    nn::LandmarkNet<float> net(cfg.hourglass, data.meta.dims, cfg.seed);
    return run(cfg, data, pool, net,
               [&](nn::LandmarkNet<float>& m, const Batch& b) {
                 return losses::landmark_objective(m.forward(b.images, nn::Mode::train), b.heatmaps, b.radius,
                                                   cfg.weights);
               },
               resume_from);
  }
  nn::GazemapNet<float> net(cfg.hourglass, cfg.densenet, data.meta.dims, cfg.seed);
  return run(cfg, data, pool, net,
             [&](nn::GazemapNet<float>& m, const Batch& b) {
               return losses::gazemap_objective(m.forward(b.images, nn::Mode::train), b.gaze, b.gazemaps, cfg.weights);
             },
             resume_from);
}

ModelKind checkpoint_model_kind(const std::filesystem::path& checkpoint) {
  return model_kind_from_string(read_checkpoint_meta(checkpoint).at("model").get<std::string>());
}

nn::LandmarkNet<float> load_landmark_net(const std::filesystem::path& checkpoint) {
  const auto ckpt = load_checkpoint<float>(checkpoint);
  if (ckpt.meta.at("model") != "landmark")
    throw std::invalid_argument(checkpoint.string() + " is not a landmark-network checkpoint");
  const auto cfg = train_config_from_json(ckpt.meta.at("config"));
  nn::LandmarkNet<float> net(cfg.hourglass, {ckpt.meta.at("height").get<int>(), ckpt.meta.at("width").get<int>()},
                             cfg.seed);
  copy_model_state(net, ckpt);
  return net;
}

nn::GazemapNet<float> load_gazemap_net(const std::filesystem::path& checkpoint) {
  const auto ckpt = load_checkpoint<float>(checkpoint);
  if (ckpt.meta.at("model") != "gazemap")
    throw std::invalid_argument(checkpoint.string() + " is not a gazemap-network checkpoint");
  const auto cfg = train_config_from_json(ckpt.meta.at("config"));
  nn::GazemapNet<float> net(cfg.hourglass, cfg.densenet,
                            {ckpt.meta.at("height").get<int>(), ckpt.meta.at("width").get<int>()}, cfg.seed);
  copy_model_state(net, ckpt);
  return net;
}

}  // namespace gzk::harness

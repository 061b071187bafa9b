#include "gzk/harness/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "gzk/harness/train.hpp"

namespace gzk::harness {

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

struct Pending {
  std::vector<std::size_t> indices;
  std::vector<eye::GazeAngles> predictions;
};

Tensor<float> image_batch(const eye::Dataset& data, std::span<const std::size_t> indices) {
  const auto plane = static_cast<std::size_t>(data.meta.dims.height) * static_cast<std::size_t>(data.meta.dims.width);
  std::vector<float> buf(indices.size() * plane);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& img = data.samples.at(indices[k]).image;
    std::copy(img.begin(), img.end(), buf.begin() + static_cast<std::ptrdiff_t>(k * plane));
  }
  return Tensor<float>::from({static_cast<Index>(indices.size()), 1, data.meta.dims.height, data.meta.dims.width},
                             std::move(buf));
}

void require_dims(eye::Dims net, const eye::Dataset& data, const std::filesystem::path& checkpoint) {
  if (!(net == data.meta.dims))
    throw std::invalid_argument("checkpoint " + checkpoint.string() + " expects " + std::to_string(net.height) + "x" +
                                std::to_string(net.width) + " images, dataset has " +
                                std::to_string(data.meta.dims.height) + "x" + std::to_string(data.meta.dims.width));
}

std::vector<LandmarkPrediction> landmarks_for(const EvalOptions& opts, const eye::Dataset& data,
                                              std::span<const std::size_t> indices) {
  if (opts.checkpoint.empty()) {
    std::vector<LandmarkPrediction> out;
    for (std::size_t i : indices) out.push_back({data.samples[i].landmarks, data.samples[i].eyeball.radius});
    return out;
  }
  auto net = load_landmark_net(opts.checkpoint);
  require_dims(net.dims(), data, opts.checkpoint);
  return predict_landmarks(net, data, indices);
}

std::vector<eye::GazeAngles> run_base(Pipeline p, const EvalOptions& opts, const eye::Dataset& data,
                                      std::span<const std::size_t> indices) {
  std::vector<eye::GazeAngles> out;
  switch (p) {
    case Pipeline::constant:
      return std::vector<eye::GazeAngles>(indices.size());
    case Pipeline::network: {
      if (opts.checkpoint.empty()) throw std::invalid_argument("network pipeline needs a gazemap checkpoint");
      if (checkpoint_model_kind(opts.checkpoint) != ModelKind::gazemap)
        throw std::invalid_argument("network pipeline needs a gazemap checkpoint; use fit or lightweight for " +
                                    opts.checkpoint.string());
      auto net = load_gazemap_net(opts.checkpoint);
      require_dims(net.dims(), data, opts.checkpoint);
      return predict_gaze(net, data, indices);
    }
    case Pipeline::fit: {
      const auto lms = landmarks_for(opts, data, indices);
      out.resize(lms.size());
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(lms.size()); ++k) {
        const auto& p = lms[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(k)] =
            est::fit_eyeball_model(p.landmarks, std::max(p.radius, 1.0), data.meta.dims).gaze;
      }
      return out;
    }
    case Pipeline::lightweight: {
      if (opts.lightweight_model.empty()) throw std::invalid_argument("lightweight pipeline needs a model file");
      std::ifstream f(opts.lightweight_model);
      if (!f) throw std::runtime_error("cannot open " + opts.lightweight_model.string());
      const auto model = est::lightweight_from_json(nlohmann::json::parse(f));
      for (const auto& p : landmarks_for(opts, data, indices))
        out.push_back(est::predict_lightweight(model, p.landmarks, p.radius));
      return out;
    }
    case Pipeline::with_calibration:
      break;
  }
  throw std::invalid_argument("with-calibration cannot calibrate itself");
}

std::string default_model_id(const EvalOptions& opts) {
  if (!opts.model_id.empty()) return opts.model_id;
  if (!opts.checkpoint.empty()) {
    const auto parent = opts.checkpoint.parent_path().filename().string();
    return parent.empty() ? opts.checkpoint.stem().string() : parent + "/" + opts.checkpoint.stem().string();
  }
  if (opts.pipeline == Pipeline::lightweight && !opts.lightweight_model.empty())
    return opts.lightweight_model.parent_path().filename().string();
  return "labels";
}

std::string cell(const std::optional<double>& v) { return v ? est::exact_decimal(*v) : std::string(); }

}  // namespace

std::string to_string(Pipeline p) {
  switch (p) {
    case Pipeline::network: return "network";
    case Pipeline::fit: return "fit";
    case Pipeline::lightweight: return "lightweight";
    case Pipeline::with_calibration: return "with-calibration";
    case Pipeline::constant: return "constant";
  }
  return "?";
}

Pipeline pipeline_from_string(const std::string& s) {
  for (Pipeline p : {Pipeline::network, Pipeline::fit, Pipeline::lightweight, Pipeline::with_calibration,
                     Pipeline::constant})
    if (to_string(p) == s) return p;
  throw std::invalid_argument("unknown pipeline '" + s +
                              "' (expected network, fit, lightweight, with-calibration or constant)");
}

EvalReport make_report(std::string model_id, std::string pipeline, std::vector<EvalEntry> entries) {
  EvalReport r;
  r.model_id = std::move(model_id);
  r.pipeline = std::move(pipeline);
  r.n_samples = static_cast<std::int64_t>(entries.size());
  double sp = 0, sy = 0, sa = 0;
  for (const auto& e : entries) {
    sp += std::abs(e.prediction.pitch - e.truth.pitch) * kDeg;
    sy += std::abs(e.prediction.yaw - e.truth.yaw) * kDeg;
    sa += eye::angular_error_deg(e.prediction, e.truth);
  }
  if (!entries.empty()) {
    const double n = static_cast<double>(entries.size());
    r.mae_pitch_deg = sp / n;
    r.mae_yaw_deg = sy / n;
    r.mae_angular_deg = sa / n;
  }
  r.per_sample = std::move(entries);
  return r;
}

std::vector<LandmarkPrediction> predict_landmarks(nn::LandmarkNet<float>& net, const eye::Dataset& data,
                                                  std::span<const std::size_t> indices, int batch_size) {
  NoGradGuard guard;
  std::vector<LandmarkPrediction> out;
  out.reserve(indices.size());
  for (std::size_t first = 0; first < indices.size(); first += static_cast<std::size_t>(batch_size)) {
    const auto chunk = indices.subspan(first, std::min<std::size_t>(batch_size, indices.size() - first));
    const auto res = net.forward(image_batch(data, chunk), nn::Mode::eval);
    const auto lm = res.landmarks.data();
    const auto rad = res.radius.data();
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      LandmarkPrediction p;
      for (std::size_t i = 0; i < eye::kNumLandmarks; ++i)
        p.landmarks[i] = {lm[(k * eye::kNumLandmarks + i) * 2], lm[(k * eye::kNumLandmarks + i) * 2 + 1]};
      p.radius = rad[k];
      out.push_back(p);
    }
  }
  return out;
}

std::vector<eye::GazeAngles> predict_gaze(nn::GazemapNet<float>& net, const eye::Dataset& data,
                                          std::span<const std::size_t> indices, int batch_size) {
  NoGradGuard guard;
  std::vector<eye::GazeAngles> out;
  out.reserve(indices.size());
  for (std::size_t first = 0; first < indices.size(); first += static_cast<std::size_t>(batch_size)) {
    const auto chunk = indices.subspan(first, std::min<std::size_t>(batch_size, indices.size() - first));
    const auto res = net.forward(image_batch(data, chunk), nn::Mode::eval);
    const auto g = res.gaze.data();
    for (std::size_t k = 0; k < chunk.size(); ++k) out.push_back({g[2 * k], g[2 * k + 1]});
  }
  return out;
}

std::vector<std::size_t> eval_indices(const eye::Dataset& data, const std::string& split) {
  if (split == "train") return eye::split_indices(data, eye::Split::train);
  if (split == "val") return eye::split_indices(data, eye::Split::val);
  if (split == "test") return eye::split_indices(data, eye::Split::test);
  std::vector<std::size_t> out;
  if (split == "heldout" || split == "all") {
    for (std::size_t i = 0; i < data.samples.size(); ++i)
      if (split == "all" || eye::split_of(data.samples[i].subject_id) != eye::Split::train) out.push_back(i);
    return out;
  }
  throw std::invalid_argument("unknown split '" + split + "' (expected train, val, test, heldout or all)");
}

EvalReport evaluate(const EvalOptions& opts, const eye::Dataset& data) {
  auto indices = eval_indices(data, opts.split);
  if (opts.limit > 0 && static_cast<std::size_t>(opts.limit) < indices.size())
    indices.resize(static_cast<std::size_t>(opts.limit));
  if (indices.empty()) throw std::invalid_argument("split '" + opts.split + "' has no samples");

  std::vector<EvalEntry> entries;
  if (opts.pipeline != Pipeline::with_calibration) {
    const auto pred = run_base(opts.pipeline, opts, data, indices);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const auto& s = data.samples[indices[k]];
      entries.push_back({s.gaze, pred[k], s.subject_id, static_cast<std::int64_t>(indices[k])});
    }
    return make_report(default_model_id(opts), to_string(opts.pipeline), std::move(entries));
  }

  const auto pred = run_base(opts.calibrated, opts, data, indices);
  std::map<std::int32_t, std::vector<std::size_t>> by_subject;  // positions into indices
  for (std::size_t k = 0; k < indices.size(); ++k) by_subject[data.samples[indices[k]].subject_id].push_back(k);
  const auto n_cal = static_cast<std::size_t>(std::max(opts.calibration_samples, 0));
  for (const auto& [subject, pos] : by_subject) {
    if (pos.size() <= n_cal) continue;
    std::vector<eye::GazeAngles> cp, ct;
    for (std::size_t j = 0; j < n_cal; ++j) {
      cp.push_back(pred[pos[j]]);
      ct.push_back(data.samples[indices[pos[j]]].gaze);
    }
    const auto calib = est::calibrate_personal(cp, ct, subject);
    for (std::size_t j = n_cal; j < pos.size(); ++j) {
      const auto& s = data.samples[indices[pos[j]]];
      entries.push_back({s.gaze, calib.apply(pred[pos[j]]), subject, static_cast<std::int64_t>(indices[pos[j]])});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const EvalEntry& a, const EvalEntry& b) { return a.index < b.index; });
  return make_report(default_model_id(opts), to_string(opts.pipeline) + ":" + to_string(opts.calibrated),
                     std::move(entries));
}

double median_landmark_error(std::span<const LandmarkPrediction> predicted, const eye::Dataset& data,
                             std::span<const std::size_t> indices) {
  if (predicted.size() != indices.size() || predicted.empty())
    throw std::invalid_argument("median_landmark_error: prediction count does not match the indices");
  std::vector<double> per_sample;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& truth = data.samples[indices[k]].landmarks;
    double sum = 0.0;
    for (std::size_t i = 0; i < eye::kNumLandmarks; ++i)
      sum += std::hypot(predicted[k].landmarks[i].u - truth[i].u, predicted[k].landmarks[i].v - truth[i].v);
    per_sample.push_back(sum / eye::kNumLandmarks);
  }
  std::sort(per_sample.begin(), per_sample.end());
  const std::size_t n = per_sample.size();
  return n % 2 ? per_sample[n / 2] : 0.5 * (per_sample[n / 2 - 1] + per_sample[n / 2]);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& e : r.per_sample)
    samples.push_back({{"index", e.index},
                       {"subject", e.subject},
                       {"truth", {e.truth.pitch, e.truth.yaw}},
                       {"prediction", {e.prediction.pitch, e.prediction.yaw}}});
  return {{"model_id", r.model_id},
          {"pipeline", r.pipeline},
          {"n_samples", r.n_samples},
          {"mae_pitch_deg", r.mae_pitch_deg},
          {"mae_yaw_deg", r.mae_yaw_deg},
          {"mae_angular_deg", r.mae_angular_deg},
          {"per_sample", samples}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.pipeline = j.at("pipeline").get<std::string>();
  r.n_samples = j.at("n_samples").get<std::int64_t>();
  r.mae_pitch_deg = j.at("mae_pitch_deg").get<double>();
  r.mae_yaw_deg = j.at("mae_yaw_deg").get<double>();
  r.mae_angular_deg = j.at("mae_angular_deg").get<double>();
  for (const auto& e : j.at("per_sample"))
    r.per_sample.push_back({{e.at("truth")[0].get<double>(), e.at("truth")[1].get<double>()},
                            {e.at("prediction")[0].get<double>(), e.at("prediction")[1].get<double>()},
                            e.at("subject").get<std::int32_t>(),
                            e.at("index").get<std::int64_t>()});
  if (static_cast<std::int64_t>(r.per_sample.size()) != r.n_samples)
    throw std::runtime_error("report: per_sample has " + std::to_string(r.per_sample.size()) + " entries, n_samples is " +
                             std::to_string(r.n_samples));
  return r;
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << to_json(report).dump(2) << '\n';
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open report " + path.string());
  return report_from_json(nlohmann::json::parse(f));
}

TableRow table_row(const EvalReport& report, std::string study, std::string parameters) {
  return {"desk",         std::move(study),     std::move(parameters), report.model_id,        report.pipeline,
          report.n_samples, report.mae_pitch_deg, report.mae_yaw_deg,  report.mae_angular_deg};
}

std::vector<TableRow> published_reference_rows() {
  auto row = [](std::string study, std::string params, std::string model, double mae) {
    return TableRow{"published", std::move(study), std::move(params), std::move(model), "", 0, {}, {}, mae};
  };
  return {
      row("dense_blocks", "5 dense blocks (5 layers)", "gazemap", 5.88),
      row("dense_blocks", "5 dense blocks (3 layers)", "gazemap", 9.09),
      row("dense_blocks", "5 dense blocks (6 layers)", "gazemap", 4.6),
      row("dense_blocks", "6 dense blocks (5 layers)", "gazemap", 4.5),
      row("dense_blocks", "4 dense blocks (5 layers)", "gazemap", 7.6),
      row("learning_rate", "alpha = 0.001", "gazemap", 6.78),
      row("learning_rate", "alpha = 0.0001", "gazemap", 4.65),
      row("learning_rate", "alpha = 0.00001", "gazemap", 4.6),
      row("hourglass_stacks", "3 stacked hourglass modules", "landmark", 5.3),
      row("hourglass_stacks", "8 stacked hourglass modules", "landmark", 4.09),
      row("hourglass_stacks", "2 stacked hourglass modules", "landmark", 7.3),
      row("learning_rate", "alpha = 0.001", "landmark", 8.5),
      row("learning_rate", "alpha = 0.0001", "landmark", 4.9),
      row("learning_rate", "alpha = 0.00001", "landmark", 4.6),
  };
}

std::string format_table_row(const TableRow& r) {
  auto quoted = [](const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::ostringstream os;
  os << r.source << ',' << quoted(r.study) << ',' << quoted(r.parameters) << ',' << quoted(r.model_id) << ','
     << r.pipeline << ',' << r.n_samples << ',' << cell(r.mae_pitch_deg) << ',' << cell(r.mae_yaw_deg) << ','
     << est::exact_decimal(r.mae_angular_deg);
  return os.str();
}

void write_table(const std::filesystem::path& path, std::span<const TableRow> rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << kTableHeader << '\n';
  for (const auto& r : rows) f << format_table_row(r) << '\n';
}

}  // namespace gzk::harness

// Command-line front end: generate, train, eval, infer, plot, sweep.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gzk/dataset.hpp"
#include "gzk/harness/eval.hpp"
#include "gzk/harness/plot.hpp"
#include "gzk/harness/sweep.hpp"
#include "gzk/harness/train.hpp"
#include "gzk/kernels.hpp"

using namespace gzk;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return json::parse(f);
}

/// Grayscale image: binary PGM (P5, 8 bit, scaled to [0, 1]) or raw
/// little-endian float32 of the dataset's dims.
std::vector<float> read_image(const std::string& path, eye::Dims dims) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<float> out(static_cast<std::size_t>(dims.height) * static_cast<std::size_t>(dims.width));
  if (path.size() > 4 && path.substr(path.size() - 4) == ".pgm") {
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    f.get();
    if (magic != "P5" || maxval <= 0 || maxval > 255) throw std::runtime_error(path + ": expected an 8-bit P5 PGM");
    if (w != dims.width || h != dims.height)
      throw std::invalid_argument(path + " is " + std::to_string(h) + "x" + std::to_string(w) + ", network expects " +
                                  std::to_string(dims.height) + "x" + std::to_string(dims.width));
    std::vector<unsigned char> px(out.size());
    f.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!f) throw std::runtime_error(path + ": truncated pixel data");
    for (std::size_t i = 0; i < px.size(); ++i) out[i] = static_cast<float>(px[i]) / static_cast<float>(maxval);
    return out;
  }
  f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(float)));
  if (!f || f.peek() != std::char_traits<char>::eof())
    throw std::invalid_argument(path + ": expected exactly " + std::to_string(out.size()) + " float32 values");
  return out;
}

json gaze_json(eye::GazeAngles g) { return {{"pitch", g.pitch}, {"yaw", g.yaw}}; }

struct GenerateArgs {
  std::int64_t n = 0;
  std::uint64_t seed = 0;
  std::string out, ranges;
  int height = 64, width = 96;
  double sigma = eye::kDefaultHeatmapSigma;
};

struct TrainArgs {
  std::string config, resume;
  json flags = json::object();
};

struct EvalArgs {
  std::string checkpoint, dataset, pipeline, calibrated, split = "test", landmarks, report, table, study = "eval",
                                                        parameters, model_id;
  std::int64_t limit = 0;
  int calibration_samples = est::kAffineMinSamples;
  bool reference_rows = false;
};

struct InferArgs {
  std::string checkpoint, dataset, image, lightweight;
  std::int64_t index = -1;
};

struct PlotArgs {
  std::string report, angle = "pitch", out;
};

struct SweepArgs {
  std::string grid, out = "sweep";
};

int run_generate(const GenerateArgs& a) {
  eye::SamplingRanges ranges;
  if (!a.ranges.empty()) ranges = eye::ranges_from_json(read_json_file(a.ranges));
  const auto data = eye::generate_dataset(a.n, a.seed, ranges, {a.height, a.width}, a.sigma);
  eye::write_dataset(data, a.out);
  std::cout << "wrote " << data.samples.size() << " samples to " << a.out << " (" << data.meta.rejections
            << " redraws)\n";
  return 0;
}

int run_train(const TrainArgs& a) {
  json j = a.config.empty() ? json::object() : read_json_file(a.config);
  harness::merge_json(j, a.flags);
  const auto cfg = harness::train_config_from_json(j);
  const auto result = harness::train(cfg, a.resume);
  std::cout << "trained " << harness::to_string(cfg.model) << " to step " << result.steps_completed << "; "
            << result.final_checkpoint.string() << '\n';
  return 0;
}

int run_eval(const EvalArgs& a) {
  harness::EvalOptions o;
  o.split = a.split;
  o.limit = a.limit;
  o.calibration_samples = a.calibration_samples;
  o.model_id = a.model_id;
  // a lightweight model file stands in for a checkpoint; its features come
  // from --landmarks or the labels
  const bool lightweight_file = a.checkpoint.size() > 5 && a.checkpoint.substr(a.checkpoint.size() - 5) == ".json";
  harness::Pipeline base;
  if (lightweight_file) {
    o.lightweight_model = a.checkpoint;
    o.checkpoint = a.landmarks;
    base = harness::Pipeline::lightweight;
  } else {
    o.checkpoint = a.checkpoint;
    base = harness::checkpoint_model_kind(a.checkpoint) == harness::ModelKind::gazemap ? harness::Pipeline::network
                                                                                       : harness::Pipeline::fit;
  }
  o.pipeline = a.pipeline.empty() ? base : harness::pipeline_from_string(a.pipeline);
  o.calibrated = a.calibrated.empty() ? base : harness::pipeline_from_string(a.calibrated);
  const auto report = harness::evaluate(o, eye::read_dataset(a.dataset));
  if (!a.report.empty()) harness::write_report(report, a.report);
  if (!a.table.empty()) {
    std::vector<harness::TableRow> rows{harness::table_row(report, a.study, a.parameters)};
    if (a.reference_rows)
      for (auto& r : harness::published_reference_rows()) rows.push_back(std::move(r));
    harness::write_table(a.table, rows);
  }
  std::printf("%s %s n=%lld MAE pitch %.4f yaw %.4f angular %.4f deg\n", report.model_id.c_str(),
              report.pipeline.c_str(), static_cast<long long>(report.n_samples), report.mae_pitch_deg,
              report.mae_yaw_deg, report.mae_angular_deg);
  return 0;
}

int run_infer(const InferArgs& a) {
  const auto kind = harness::checkpoint_model_kind(a.checkpoint);
  eye::Dataset one;
  json out;
  auto load_input = [&](eye::Dims dims) {
    if (!a.dataset.empty()) {
      auto data = eye::read_dataset(a.dataset);
      if (a.index < 0 || static_cast<std::size_t>(a.index) >= data.samples.size())
        throw std::invalid_argument("--index out of range for " + a.dataset);
      one.meta = data.meta;
      one.samples = {data.samples[static_cast<std::size_t>(a.index)]};
      out["truth"] = gaze_json(one.samples[0].gaze);
    } else {
      one.meta.dims = dims;
      one.samples.resize(1);
      one.samples[0].image = read_image(a.image, dims);
    }
    if (!(one.meta.dims == dims)) throw std::invalid_argument("input dims do not match the checkpoint");
  };
  const std::vector<std::size_t> idx{0};
  if (kind == harness::ModelKind::gazemap) {
    auto net = harness::load_gazemap_net(a.checkpoint);
    load_input(net.dims());
    out["gaze"] = gaze_json(harness::predict_gaze(net, one, idx)[0]);
  } else {
    auto net = harness::load_landmark_net(a.checkpoint);
    load_input(net.dims());
    const auto p = harness::predict_landmarks(net, one, idx)[0];
    json lm = json::array();
    for (const auto& pt : p.landmarks) lm.push_back({pt.u, pt.v});
    out["landmarks"] = lm;
    out["radius"] = p.radius;
    const auto fit = est::fit_eyeball_model(p.landmarks, std::max(p.radius, 1.0), net.dims());
    out["gaze"] = gaze_json(fit.gaze);
    out["fit_converged"] = fit.converged;
    if (!a.lightweight.empty())
      out["gaze_lightweight"] = gaze_json(
          est::predict_lightweight(est::lightweight_from_json(read_json_file(a.lightweight)), p.landmarks, p.radius));
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int run_plot(const PlotArgs& a) {
  harness::plot_pred_vs_actual(harness::read_report(a.report), harness::angle_from_string(a.angle), a.out);
  return 0;
}

int run_sweep(const SweepArgs& a) {
  const auto rows = harness::run_sweep(harness::sweep_from_json(read_json_file(a.grid)), a.out);
  std::cout << "wrote " << rows.size() << " rows to " << (std::filesystem::path(a.out) / "results.csv").string()
            << '\n';
  return 0;
}

/// Flag values override the config file; only flags given on the command line
/// enter the patch.
template <typename V>
void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help, json& patch) {
  app->add_option_function<V>(
      name,
      [&patch, key](const V& v) {
        json* node = &patch;
        std::size_t start = 0;
        for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1)
          node = &(*node)[key.substr(start, dot - start)];
        (*node)[key.substr(start)] = v;
      },
      help);
}

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  kernels::tune_allocator();

  CLI::App app{"Gaze estimation from synthetic eye images"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Render a seeded synthetic dataset");
  g->add_option("--n", gen.n, "Number of samples")->required()->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Dataset seed");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--ranges", gen.ranges, "JSON file with sampling ranges");
  g->add_option("--height", gen.height, "Image height")->check(CLI::PositiveNumber);
  g->add_option("--width", gen.width, "Image width")->check(CLI::PositiveNumber);
  g->add_option("--sigma", gen.sigma, "Heatmap Gaussian sigma (px)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a network or the lightweight regressor");
  t->add_option("--config", tr.config, "JSON training config")->check(CLI::ExistingFile);
  t->add_option("--resume", tr.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  flag<std::string>(t, "--model", "model", "landmark | gazemap | lightweight", tr.flags);
  flag<std::string>(t, "--dataset", "dataset", "Dataset directory", tr.flags);
  flag<std::string>(t, "--out", "out_dir", "Run directory", tr.flags);
  flag<std::string>(t, "--split", "split", "train | all", tr.flags);
  flag<double>(t, "--lr", "base_lr", "Base learning rate", tr.flags);
  flag<int>(t, "--lr-decay-every", "lr_decay_every", "Steps between decays", tr.flags);
  flag<int>(t, "--batch-size", "batch_size", "Batch size", tr.flags);
  flag<int>(t, "--steps", "max_steps", "Maximum steps", tr.flags);
  flag<int>(t, "--epochs", "max_epochs", "Maximum epochs", tr.flags);
  flag<std::uint64_t>(t, "--seed", "seed", "Initialization and shuffling seed", tr.flags);
  flag<int>(t, "--stacks", "hourglass.n_stacks", "Hourglass stacks", tr.flags);
  flag<int>(t, "--features", "hourglass.n_features", "Hourglass feature channels", tr.flags);
  flag<int>(t, "--dense-blocks", "densenet.n_blocks", "Dense blocks", tr.flags);
  flag<int>(t, "--dense-layers", "densenet.layers_per_block", "Layers per dense block", tr.flags);
  flag<bool>(t, "--augment", "augment.enabled", "Translation and scale augmentation", tr.flags);
  flag<int>(t, "--checkpoint-every", "checkpoint_every", "Steps between checkpoints", tr.flags);
  flag<std::string>(t, "--landmark-checkpoint", "landmark_checkpoint",
                    "Lightweight only: landmark network supplying features", tr.flags);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint or lightweight model");
  e->add_option("--checkpoint", ev.checkpoint, "Network checkpoint or lightweight.json")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_option("--dataset", ev.dataset, "Dataset directory")->required();
  e->add_option("--pipeline", ev.pipeline, "network | fit | lightweight | with-calibration | constant");
  e->add_option("--calibrate", ev.calibrated, "Base estimator under with-calibration");
  e->add_option("--landmarks", ev.landmarks, "Landmark checkpoint feeding a lightweight model");
  e->add_option("--split", ev.split, "train | val | test | heldout | all");
  e->add_option("--limit", ev.limit, "Evaluate the first n samples of the split");
  e->add_option("--calibration-samples", ev.calibration_samples, "Per-subject calibration samples");
  e->add_option("--report", ev.report, "Write the JSON report here");
  e->add_option("--table", ev.table, "Write a CSV table row here");
  e->add_option("--study", ev.study, "Study column of the table row");
  e->add_option("--parameters", ev.parameters, "Parameters column of the table row");
  e->add_option("--model-id", ev.model_id, "Model id in the report");
  e->add_flag("--reference-rows", ev.reference_rows, "Append the published reference rows to the table");

  InferArgs in;
  auto* i = app.add_subcommand("infer", "Predict gaze for one image");
  i->add_option("--checkpoint", in.checkpoint, "Network checkpoint")->required()->check(CLI::ExistingFile);
  auto* ds = i->add_option("--dataset", in.dataset, "Dataset directory");
  i->add_option("--index", in.index, "Sample index within --dataset")->needs(ds);
  auto* im = i->add_option("--image", in.image, "8-bit PGM or raw float32 image")->check(CLI::ExistingFile);
  ds->excludes(im);
  i->add_option("--lightweight", in.lightweight, "Also predict with this lightweight model")
      ->check(CLI::ExistingFile);

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Predicted-versus-actual SVG from a report");
  p->add_option("--report", pl.report, "JSON report")->required()->check(CLI::ExistingFile);
  p->add_option("--angle", pl.angle, "pitch | yaw")->check(CLI::IsMember({"pitch", "yaw"}));
  p->add_option("--out", pl.out, "SVG output")->required();

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Train and evaluate a parameter grid");
  s->add_option("--grid", sw.grid, "Sweep JSON")->required()->check(CLI::ExistingFile);
  s->add_option("--out", sw.out, "Output directory");

  try {
    app.parse(argc, argv);
    if (i->parsed() && in.dataset.empty() == in.image.empty())
      throw CLI::ValidationError("infer", "exactly one of --dataset/--index or --image is required");
    if (i->parsed() && !in.dataset.empty() && in.index < 0)
      throw CLI::ValidationError("infer", "--index is required with --dataset");
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (g->parsed()) return run_generate(gen);
    if (t->parsed()) return run_train(tr);
    if (e->parsed()) return run_eval(ev);
    if (i->parsed()) return run_infer(in);
    if (p->parsed()) return run_plot(pl);
    return run_sweep(sw);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
}

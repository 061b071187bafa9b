// Acceptance suite. Each criterion prints one PASS/FAIL line; the process
// exits non-zero if any selected criterion fails. Training runs live under
// --work and are reused by later criteria in the same session when their
// configuration matches.
//
//   acceptance --criterion 7 --work <dir>
//   acceptance --all --work <dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "gzk/estimators.hpp"
#include "gzk/harness/eval.hpp"
#include "gzk/harness/train.hpp"
#include "gzk/kernels.hpp"
#include "gzk/losses.hpp"
#include "gzk/reference.hpp"
#include "primitive_cases.hpp"

using namespace gzk;
using namespace gzk::harness;
namespace fs = std::filesystem;

namespace {

// ---- pinned thresholds -----------------------------------------------------

constexpr double kGradTolF32 = 1e-3;
constexpr double kGradTolF64 = 1e-5;
constexpr double kGradBudgetS = 120.0;
// f32 loss outputs are O(100); with the default 1e-3 step their rounding
// alone exceeds 1e-3 relative error, so loss checks take a wider step.
constexpr float kLossStepF32 = 3e-2f;
constexpr double kOracleAbsTol = 1e-6;
constexpr double kGeomTol = 1e-4;
constexpr double kRatioTol = 1e-7;
constexpr double kFitNoiselessDeg = 0.5;
constexpr int kFitNoiselessPass = 99;
constexpr double kFitBudgetS = 30.0;
constexpr double kFitNoisyMeanDeg = 2.0;
constexpr double kFitNoisePx = 1.0;
constexpr double kGazemapSpot = 0.06750;
constexpr double kGazemapSpotTol = 1e-4;
constexpr double kGroundTruthFloor = 1e-9;
constexpr double kLrRelTol = 1e-12;
constexpr double kSmokeMedianPx = 3.0;
constexpr double kSmokeLossRatio = 0.2;
constexpr double kSmokeBudgetMin = 30.0;
constexpr double kGazemapGain = 0.30;
constexpr int kCalibrationNeeded = 18;
constexpr int kCalibrationSamples = 10;

// ---- shared setup ------------------------------------------------------------

fs::path g_work;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Generated on first use; generation is deterministic, so an existing
/// directory with matching meta is reused.
fs::path dataset(const std::string& name, std::int64_t n, std::uint64_t seed, eye::Dims dims,
                 const eye::SamplingRanges& ranges = {}, double sigma = eye::kDefaultHeatmapSigma) {
  const fs::path dir = g_work / "data" / name;
  if (fs::exists(dir / "meta.json")) {
    const auto meta = nlohmann::json::parse(std::ifstream(dir / "meta.json"));
    if (meta.value("count", std::int64_t{-1}) == n && meta.value("seed", std::uint64_t{0}) == seed) return dir;
  }
  fs::remove_all(dir);
  eye::write_dataset(eye::generate_dataset(n, seed, ranges, dims, sigma), dir);
  return dir;
}

/// Smoke-scale dataset: 1250 samples over 20 subjects, 1000 of them in the
/// training split; the first 200 held-out samples are scored.
constexpr std::uint64_t kSmokeSeed = 2024;
fs::path smoke_dataset() { return dataset("smoke", 1250, kSmokeSeed, {64, 96}); }

std::vector<std::size_t> smoke_heldout(const eye::Dataset& data) {
  auto idx = eval_indices(data, "heldout");
  idx.resize(std::min<std::size_t>(idx.size(), 200));
  return idx;
}

struct Run {
  TrainConfig config;
  std::vector<StepLog> log;
  fs::path checkpoint;
  double train_minutes = 0.0;  // sum of per-step wall times
};

/// Trains unless a completed run with the identical config exists.
Run ensure_run(const std::string& name, TrainConfig cfg) {
  cfg.out_dir = (g_work / "runs" / name).string();
  const fs::path dir = cfg.out_dir;
  bool reuse = false;
  if (fs::exists(dir / "status.json") && fs::exists(dir / "config.json")) {
    const auto status = nlohmann::json::parse(std::ifstream(dir / "status.json"));
    const auto saved = nlohmann::json::parse(std::ifstream(dir / "config.json"));
    reuse = status.value("status", "") == "completed" && saved == to_json(cfg);
  }
  if (reuse) {
    std::printf("  reusing %s\n", dir.c_str());
  } else {
    std::printf("  training %s (%s, %d steps)\n", name.c_str(), to_string(cfg.model).c_str(), cfg.max_steps);
    std::fflush(stdout);
    fs::remove_all(dir);
    train(cfg);
  }
  Run r;
  r.config = cfg;
  r.log = read_log(dir / "log.csv");
  r.checkpoint = dir / "final.gzk";
  for (const auto& s : r.log) r.train_minutes += s.wall_ms / 60000.0;
  return r;
}

TrainConfig smoke_landmark_config(int stacks, int features, std::uint64_t seed) {
  TrainConfig c;
  c.model = ModelKind::landmark;
  c.hourglass.n_stacks = stacks;
  c.hourglass.n_features = features;
  c.batch_size = 16;
  c.max_steps = 2000;
  c.seed = seed;
  c.dataset = smoke_dataset().string();
  return c;
}

double heldout_landmark_error(const Run& run) {
  const auto data = eye::read_dataset(run.config.dataset);
  const auto idx = smoke_heldout(data);
  auto net = load_landmark_net(run.checkpoint);
  const auto pred = predict_landmarks(net, data, idx);
  return median_landmark_error(pred, data, idx);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- criteria ------------------------------------------------------------------

template <typename T>
double worst_gradcheck(std::string& worst_name) {
  const T h = sizeof(T) == 4 ? T(kLossStepF32) : testing::default_step<T>();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto note = [&](const std::string& name, double rel) {
      if (rel > worst) {
        worst = rel;
        worst_name = name;
      }
    };
    for (auto& c : testing::primitive_cases<T>(seed)) note(c.name, testing::gradcheck<T>(c.f, c.inputs, seed * 131).rel_error);

    Rng rng(seed * 977);
    using testing::random_tensor;
    const losses::LossWeights w;
    auto hp = random_tensor<T>({2, 18, 4, 6}, rng, -1, 1, true);
    auto ht = random_tensor<T>({2, 18, 4, 6}, rng, 0, 1);
    note("loss_heatmaps", testing::gradcheck<T>([&](auto& in) { return losses::loss_heatmaps(in[0], ht, w.alpha_hm); },
                                                {hp}, seed, h)
                              .rel_error);
    auto rp = random_tensor<T>({3, 1}, rng, 10, 30, true);
    auto rt = random_tensor<T>({3, 1}, rng, 10, 30);
    note("loss_radius", testing::gradcheck<T>([&](auto& in) { return losses::loss_radius(in[0], rt, w.beta_rad); },
                                              {rp}, seed, h)
                            .rel_error);
    auto gp = random_tensor<T>({3, 2}, rng, -1, 1, true);
    auto gt = random_tensor<T>({3, 2}, rng, -1, 1);
    note("loss_gaze",
         testing::gradcheck<T>([&](auto& in) { return losses::loss_gaze(in[0], gt); }, {gp}, seed, h).rel_error);
    auto lg = random_tensor<T>({2, 3, 4, 6}, rng, -3, 3, true);
    std::vector<T> oh(2 * 3 * 4 * 6, T(0));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t p = 0; p < 24; ++p) oh[(n * 3 + static_cast<std::size_t>(rng.integer(0, 2))) * 24 + p] = T(1);
    const auto oht = Tensor<T>::from({2, 3, 4, 6}, oh);
    note("loss_gazemap", testing::gradcheck<T>([&](auto& in) { return losses::loss_gazemap(in[0], oht, w.alpha_gm); },
                                               {lg}, seed, h)
                             .rel_error);
  }
  return worst;
}

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string n32, n64;
  const double w32 = worst_gradcheck<float>(n32);
  const double w64 = worst_gradcheck<double>(n64);
  const double secs = seconds_since(t0);
  return {w32 <= kGradTolF32 && w64 <= kGradTolF64 && secs < kGradBudgetS,
          "gradient checks, 5 seeds: worst rel err f32 " + fmt("%.2e", w32) + " (" + n32 + ", <= 1e-3), f64 " +
              fmt("%.2e", w64) + " (" + n64 + ", <= 1e-5), " + fmt("%.1f", secs) + " s (< 120 s)"};
}

Outcome criterion_2() {
  Rng rng(2);
  using testing::random_tensor;
  double conv = 0, pool = 0, fc = 0;
  auto diff = [](std::span<const double> a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return a.size() == b.size() ? m : INFINITY;
  };
  for (int k = 0; k < 20; ++k) {
    const Index n = rng.integer(1, 3), ci = rng.integer(1, 6), co = rng.integer(1, 6);
    const Index ks = 2 * rng.integer(0, 3) + 1, stride = rng.integer(1, 2), pad = rng.integer(0, ks / 2);
    const Index h = rng.integer(ks, 14), w = rng.integer(ks, 14);
    const auto x = random_tensor<double>({n, ci, h, w}, rng), wt = random_tensor<double>({co, ci, ks, ks}, rng);
    const std::vector<double> xv(x.data().begin(), x.data().end()), wv(wt.data().begin(), wt.data().end());
    conv = std::max(conv, diff(ops::conv2d(x, wt, stride, pad).data(),
                               reference::conv2d(xv, x.shape(), wv, wt.shape(), stride, pad)));
  }
  for (int k = 0; k < 20; ++k) {
    const Index win = rng.integer(2, 3);
    const Shape s{rng.integer(1, 3), rng.integer(1, 4), win * rng.integer(1, 6), win * rng.integer(1, 6)};
    const auto x = random_tensor<double>(s, rng);
    const std::vector<double> xv(x.data().begin(), x.data().end());
    pool = std::max(pool, diff(ops::pool2d(x, ops::PoolMode::max, win, win).data(), reference::max_pool(xv, s, win)));
    pool = std::max(pool, diff(ops::pool2d(x, ops::PoolMode::avg, win, win).data(), reference::avg_pool(xv, s, win)));
  }
  for (int k = 0; k < 20; ++k) {
    const Index n = rng.integer(1, 8), f = rng.integer(1, 40), g = rng.integer(1, 40);
    const auto x = random_tensor<double>({n, f}, rng), w = random_tensor<double>({f, g}, rng),
               b = random_tensor<double>({g}, rng);
    fc = std::max(fc, diff(ops::fully_connected(x, w, b).data(),
                           reference::fully_connected(std::vector<double>(x.data().begin(), x.data().end()), n, f,
                                                      std::vector<double>(w.data().begin(), w.data().end()), g,
                                                      std::vector<double>(b.data().begin(), b.data().end()))));
  }
  return {conv <= kOracleAbsTol && pool <= kOracleAbsTol && fc <= kOracleAbsTol,
          "loop oracles, 20 cases each: max abs diff conv2d " + fmt("%.1e", conv) + ", pool2d " + fmt("%.1e", pool) +
              ", fully_connected " + fmt("%.1e", fc) + " (<= 1e-6)"};
}

Outcome criterion_3() {
  const eye::Dims dims{64, 96};
  const auto a = eye::iris_center({0.0, 0.0}, 20.0, dims);
  const auto b = eye::iris_center({0.0, std::numbers::pi / 2}, 20.0, dims);
  const double ratio = eye::iris_plane_ratio();
  // closed form: (m/2 - r' sin(yaw) cos(pitch), n/2 - r' sin(pitch)), r' = r cos(asin(1/2))
  const double rp = 20.0 * std::cos(std::asin(0.5));
  const double e1 = std::hypot(a.u - 48.0, a.v - 32.0);
  const double e2 = std::hypot(b.u - 30.6795, b.v - 32.0);
  const double e3 = std::hypot(b.u - (48.0 - rp), b.v - 32.0);
  const double er = std::abs(ratio - 0.8660254);
  return {e1 <= kGeomTol && e2 <= kGeomTol && e3 <= kGeomTol && er <= kRatioTol,
          "iris_center (" + fmt("%.4f", a.u) + ", " + fmt("%.4f", a.v) + ") and (" + fmt("%.4f", b.u) + ", " +
              fmt("%.4f", b.v) + "), errors " + fmt("%.1e", std::max({e1, e2, e3})) + " (<= 1e-4); r'/r " +
              fmt("%.9f", ratio) + " (err " + fmt("%.1e", er) + ", <= 1e-7)"};
}

Outcome criterion_4() {
  const eye::Dims dims{64, 96};
  const eye::SamplingRanges ranges;
  Rng noise(44);
  int within = 0;
  double noisy_sum = 0.0, worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 100; ++i) {
    const auto d = eye::draw_sample(404, i, ranges, dims);
    const auto fit = est::fit_eyeball_model(d.landmarks, 20.0, dims);
    const double err = eye::angular_error_deg(fit.gaze, d.params.gaze);
    worst = std::max(worst, err);
    within += err <= kFitNoiselessDeg;
  }
  const double secs = seconds_since(t0);
  for (int i = 0; i < 100; ++i) {
    const auto d = eye::draw_sample(405, i, ranges, dims);
    auto lm = d.landmarks;
    for (auto& p : lm) {
      p.u = std::clamp(p.u + noise.normal(0.0, kFitNoisePx), 0.0, dims.width - 1.0);
      p.v = std::clamp(p.v + noise.normal(0.0, kFitNoisePx), 0.0, dims.height - 1.0);
    }
    noisy_sum += eye::angular_error_deg(est::fit_eyeball_model(lm, 20.0, dims).gaze, d.params.gaze);
  }
  const double noisy = noisy_sum / 100.0;
  return {within >= kFitNoiselessPass && secs < kFitBudgetS && noisy <= kFitNoisyMeanDeg,
          "noiseless " + std::to_string(within) + "/100 within 0.5 deg (>= 99, worst " + fmt("%.2e", worst) +
              " deg) in " + fmt("%.2f", secs) + " s (< 30 s); 1 px noise mean error " + fmt("%.3f", noisy) +
              " deg (<= 2.0)"};
}

Outcome criterion_5() {
  const losses::LossWeights w;
  const auto rp = Tensor<double>::from({1, 1}, {1020.0}), rt = Tensor<double>::from({1, 1}, {20.0});
  const double rad = losses::loss_radius(rp, rt, w.beta_rad).item();
  // beta = 1e-7 is not a double; the product is within one ulp of 0.1
  const bool rad_ok = rad == 0.1 || rad == std::nextafter(0.1, 0.0) || rad == std::nextafter(0.1, 1.0);

  const auto logits = Tensor<double>::zeros({1, 3, 64, 96});
  auto oh = Tensor<double>::zeros({1, 3, 64, 96});
  for (Index p = 0; p < 64 * 96; ++p) oh.mutable_data()[static_cast<std::size_t>(p + 64 * 96)] = 1.0;
  const double gm = losses::loss_gazemap(logits, oh, w.alpha_gm).item();

  Rng rng(5);
  const auto h = testing::random_tensor<double>({2, 18, 8, 12}, rng, 0, 1);
  const auto g = testing::random_tensor<double>({2, 2}, rng);
  const auto r = testing::random_tensor<double>({2, 1}, rng, 16, 24);
  auto sharp = Tensor<double>::zeros({2, 3, 8, 12});
  auto truth = Tensor<double>::zeros({2, 3, 8, 12});
  for (Index n = 0; n < 2; ++n)
    for (Index p = 0; p < 96; ++p) {
      const Index c = rng.integer(0, 2);
      truth.mutable_data()[static_cast<std::size_t>((n * 3 + c) * 96 + p)] = 1.0;
      sharp.mutable_data()[static_cast<std::size_t>((n * 3 + c) * 96 + p)] = 60.0;
    }
  const double z_hm = losses::loss_heatmaps(h, h, w.alpha_hm).item();
  const double z_rad = losses::loss_radius(r, r, w.beta_rad).item();
  const double z_gaze = losses::loss_gaze(g, g).item();
  const double z_gm = losses::loss_gazemap(sharp, truth, w.alpha_gm).item();
  const bool zero_ok = z_hm == 0.0 && z_rad == 0.0 && z_gaze == 0.0 && std::abs(z_gm) <= kGroundTruthFloor;
  return {rad_ok && std::abs(gm - kGazemapSpot) <= kGazemapSpotTol && zero_ok,
          "loss_radius(1000 px, 1e-7) = " + fmt("%.17g", rad) + " (0.1 to 1 ulp); uniform gazemap loss " +
              fmt("%.6f", gm) + " (0.06750 +- 1e-4); at ground truth hm/rad/gaze " + fmt("%g", z_hm) + "/" +
              fmt("%g", z_rad) + "/" + fmt("%g", z_gaze) + ", gazemap " + fmt("%.1e", z_gm) + " (|.| <= 1e-9)"};
}

Outcome criterion_6() {
  eye::SamplingRanges small;
  small.radius_min = 8;
  small.radius_max = 12;
  small.center_jitter = 1;
  TrainConfig c;
  c.dataset = dataset("schedule", 160, 6, {32, 48}, small, 1.0).string();
  c.split = "all";
  c.hourglass.n_stacks = 1;
  c.hourglass.n_features = 4;
  c.batch_size = 1;
  c.max_steps = 12001;
  c.checkpoint_every = 5000;
  c.augment.enabled = false;
  const auto run = ensure_run("schedule", c);
  auto at = [&](int step) { return step < static_cast<int>(run.log.size()) ? run.log[static_cast<std::size_t>(step)].lr : NAN; };
  int mismatches = 0;
  for (const auto& s : run.log) mismatches += s.lr != lr_schedule(s.step, c);
  const double l0 = at(0), l1 = at(5000), l2 = at(12000);
  auto near = [](double v, double want) { return std::abs(v - want) <= kLrRelTol * want; };
  return {run.log.size() == 12001 && mismatches == 0 && near(l0, 1e-4) && near(l1, 1e-5) && near(l2, 1e-6),
          "logged lr at steps 0/5000/12000 = " + fmt("%.17g", l0) + " / " + fmt("%.17g", l1) + " / " +
              fmt("%.17g", l2) + "; " + std::to_string(mismatches) + " of " + std::to_string(run.log.size()) +
              " logged values differ from lr_schedule"};
}

Outcome criterion_7() {
  const auto run = ensure_run("landmark_s2_f32_seed0", smoke_landmark_config(2, 32, 0));
  const double err = heldout_landmark_error(run);
  const double l50 = run.log.at(49).loss_total, l2000 = run.log.at(1999).loss_total;
  const double ratio = l2000 / l50;
  return {err <= kSmokeMedianPx && ratio < kSmokeLossRatio && run.train_minutes <= kSmokeBudgetMin,
          "2-stack/32: held-out median landmark error " + fmt("%.3f", err) + " px (<= 3.0); loss step 2000 / step 50 = " +
              fmt("%.4f", ratio) + " (< 0.2); training " + fmt("%.1f", run.train_minutes) +
              " min on " + std::to_string(kernels::num_threads()) + " thread(s) (<= 30)"};
}

/// Even feature width of a 1-stack network closest in parameter count.
int matched_one_stack_features(Index target) {
  int best = 2;
  Index best_gap = -1;
  for (int f = 2; f <= 128; f += 2) {
    nn::HourglassConfig cfg;
    cfg.n_stacks = 1;
    cfg.n_features = f;
    const Index gap = std::abs(nn::count_parameters<float>(nn::LandmarkNet<float>(cfg, {64, 96}, 0)) - target);
    if (best_gap < 0 || gap < best_gap) {
      best = f;
      best_gap = gap;
    }
  }
  return best;
}

Outcome criterion_8() {
  const Index two_stack = nn::count_parameters<float>(nn::LandmarkNet<float>(nn::HourglassConfig{}, {64, 96}, 0));
  const int f1 = matched_one_stack_features(two_stack);
  nn::HourglassConfig one;
  one.n_stacks = 1;
  one.n_features = f1;
  const Index one_stack = nn::count_parameters<float>(nn::LandmarkNet<float>(one, {64, 96}, 0));
  std::vector<double> e2, e1;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    e2.push_back(heldout_landmark_error(
        ensure_run("landmark_s2_f32_seed" + std::to_string(seed), smoke_landmark_config(2, 32, seed))));
    e1.push_back(heldout_landmark_error(ensure_run("landmark_s1_f" + std::to_string(f1) + "_seed" + std::to_string(seed),
                                                   smoke_landmark_config(1, f1, seed))));
  }
  const double m2 = median(e2), m1 = median(e1);
  return {m2 < m1, "median held-out landmark error over 3 seeds: 2-stack/32 (" + std::to_string(two_stack) +
                       " params) " + fmt("%.3f", m2) + " px vs 1-stack/" + std::to_string(f1) + " (" +
                       std::to_string(one_stack) + " params) " + fmt("%.3f", m1) + " px (2-stack must be lower)"};
}

Outcome criterion_9() {
  TrainConfig c;
  c.model = ModelKind::gazemap;
  c.max_steps = 2000;
  c.batch_size = 16;
  c.dataset = smoke_dataset().string();
  const auto run = ensure_run("gazemap_seed0", c);
  std::vector<double> medians;
  for (std::size_t w = 0; w + 500 <= run.log.size(); w += 500) {
    std::vector<double> window;
    for (std::size_t s = w; s < w + 500; ++s) window.push_back(run.log[s].loss_total);
    medians.push_back(median(window));
  }
  bool monotone = medians.size() == 4;
  for (std::size_t k = 1; k < medians.size(); ++k) monotone = monotone && medians[k] < medians[k - 1];

  const auto data = eye::read_dataset(c.dataset);
  const auto idx = smoke_heldout(data);
  auto net = load_gazemap_net(run.checkpoint);
  const auto pred = predict_gaze(net, data, idx);
  std::vector<EvalEntry> net_e, const_e;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& s = data.samples[idx[k]];
    net_e.push_back({s.gaze, pred[k], s.subject_id, static_cast<std::int64_t>(idx[k])});
    const_e.push_back({s.gaze, {0.0, 0.0}, s.subject_id, static_cast<std::int64_t>(idx[k])});
  }
  const double mae = make_report("gazemap", "network", net_e).mae_angular_deg;
  const double base = make_report("constant", "constant", const_e).mae_angular_deg;
  std::string trace;
  for (double m : medians) trace += (trace.empty() ? "" : " > ") + fmt("%.5g", m);
  return {monotone && mae <= (1.0 - kGazemapGain) * base,
          "500-step window medians " + trace + (monotone ? " (decreasing)" : " (not decreasing)") +
              "; held-out MAE " + fmt("%.2f", mae) + " deg vs constant " + fmt("%.2f", base) + " deg (gain " +
              fmt("%.1f", 100.0 * (1.0 - mae / base)) + "%, >= 30%)"};
}

Outcome criterion_10() {
  // 20 subjects x 50 samples; each subject's visual axis is offset from the
  // optical axis the landmarks encode, and landmarks carry 0.5 px noise
  auto data = eye::read_dataset(dataset("personal", 1000, 10, {64, 96}));
  Rng rng(1010);
  std::map<std::int32_t, eye::GazeAngles> offset;
  const double deg = std::numbers::pi / 180.0;
  for (std::int32_t s = 0; s < 20; ++s) offset[s] = {rng.uniform(-5.0, 5.0) * deg, rng.uniform(-5.0, 5.0) * deg};
  for (auto& s : data.samples) {
    s.gaze.pitch += offset[s.subject_id].pitch;
    s.gaze.yaw += offset[s.subject_id].yaw;
    for (auto& p : s.landmarks) {
      p.u = std::clamp(p.u + rng.normal(0.0, 0.5), 0.0, data.meta.dims.width - 1.0);
      p.v = std::clamp(p.v + rng.normal(0.0, 0.5), 0.0, data.meta.dims.height - 1.0);
    }
  }
  EvalOptions plain;
  plain.pipeline = Pipeline::fit;
  plain.split = "all";
  EvalOptions calibrated = plain;
  calibrated.pipeline = Pipeline::with_calibration;
  calibrated.calibrated = Pipeline::fit;
  calibrated.calibration_samples = kCalibrationSamples;
  const auto before = evaluate(plain, data), after = evaluate(calibrated, data);

  std::set<std::int64_t> scored;
  for (const auto& e : after.per_sample) scored.insert(e.index);
  std::map<std::int32_t, std::pair<double, double>> err;  // subject -> (uncalibrated, calibrated) sums
  for (const auto& e : before.per_sample)
    if (scored.count(e.index)) err[e.subject].first += eye::angular_error_deg(e.prediction, e.truth);
  for (const auto& e : after.per_sample) err[e.subject].second += eye::angular_error_deg(e.prediction, e.truth);
  int improved = 0;
  for (const auto& [s, v] : err) improved += v.second < v.first;
  return {improved >= kCalibrationNeeded && err.size() == 20,
          "10-sample calibration improved held-out MAE for " + std::to_string(improved) + "/" +
              std::to_string(err.size()) + " subjects (>= 18); overall " + fmt("%.2f", before.mae_angular_deg) +
              " -> " + fmt("%.2f", after.mae_angular_deg) + " deg"};
}

int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = cli + " " + args + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Outcome criterion_11(const std::string& cli) {
  eye::SamplingRanges small;
  small.radius_min = 8;
  small.radius_max = 12;
  small.center_jitter = 1;
  const auto data_dir = dataset("sweep", 160, 11, {32, 48}, small, 1.0);
  const fs::path root = g_work / "reproducibility";
  fs::remove_all(root);
  fs::create_directories(root);

  nlohmann::json spec = {
      {"study", "learning_rate"},
      {"base",
       {{"dataset", data_dir.string()},
        {"hourglass", {{"n_stacks", 2}, {"n_features", 8}}},
        {"batch_size", 4},
        {"max_steps", 40},
        {"checkpoint_every", 20}}},
      {"grid", {{"base_lr", {1e-3, 1e-4, 1e-5}}}},
      {"eval", {{"pipeline", "fit"}, {"split", "heldout"}}}};
  std::ofstream(root / "sweep.json") << spec.dump(2);
  setenv("GZK_THREADS", "1", 1);
  const int rc_a = run_cli(cli, "sweep --grid " + (root / "sweep.json").string() + " --out " + (root / "a").string());
  const int rc_b = run_cli(cli, "sweep --grid " + (root / "sweep.json").string() + " --out " + (root / "b").string());
  const std::string csv_a = slurp(root / "a" / "results.csv"), csv_b = slurp(root / "b" / "results.csv");
  const auto desk_rows = std::count(csv_a.begin(), csv_a.end(), '\n') - 1 - published_reference_rows().size();
  const bool sweep_ok = rc_a == 0 && rc_b == 0 && !csv_a.empty() && csv_a == csv_b && desk_rows == 3;

  // resume: run_0 of sweep a wrote ckpt_0000020; resume it to step 40
  kernels::set_num_threads(1);
  auto cfg = train_config_from_json(nlohmann::json::parse(slurp(root / "a" / "run_0" / "config.json")));
  cfg.out_dir = (root / "resumed").string();
  const auto resumed = train(cfg, root / "a" / "run_0" / "ckpt_0000020.gzk");
  const auto full = read_log(root / "a" / "run_0" / "log.csv");
  bool losses_equal = resumed.log.size() == 20;
  for (std::size_t k = 0; losses_equal && k < resumed.log.size(); ++k) {
    const auto& x = resumed.log[k];
    const auto& y = full.at(20 + k);
    losses_equal = x.step == y.step && x.loss_total == y.loss_total && x.loss_hm == y.loss_hm && x.loss_rad == y.loss_rad;
  }
  const auto wa = load_checkpoint<float>(root / "a" / "run_0" / "final.gzk");
  const auto wb = load_checkpoint<float>(resumed.final_checkpoint);
  bool weights_equal = wa.tensors.size() == wb.tensors.size();
  for (std::size_t i = 0; weights_equal && i < wa.tensors.size(); ++i)
    weights_equal = wa.tensors[i].name == wb.tensors[i].name &&
                    std::equal(wa.tensors[i].tensor.data().begin(), wa.tensors[i].tensor.data().end(),
                               wb.tensors[i].tensor.data().begin(), wb.tensors[i].tensor.data().end());
  return {sweep_ok && losses_equal && weights_equal,
          std::string("two 3-point lr sweeps with GZK_THREADS=1: results.csv ") +
              (csv_a == csv_b && !csv_a.empty() ? "byte-identical" : "DIFFERENT") + " (" + std::to_string(desk_rows) +
              " desk rows, exit " + std::to_string(rc_a) + "/" + std::to_string(rc_b) +
              "); resume at step 20: losses " + (losses_equal ? "bit-identical" : "DIFFERENT") + ", final weights " +
              (weights_equal ? "bit-identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  kernels::tune_allocator();

  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  bool all = false;
  std::string work = "acceptance_work", cli = GZK_CLI_PATH;
  app.add_option("--criterion", selected, "Criterion number(s) to run")->check(CLI::Range(1, 11));
  app.add_flag("--all", all, "Run every criterion");
  app.add_option("--work", work, "Directory for datasets and training runs");
  app.add_option("--cli", cli, "Path of the gzk executable");
  CLI11_PARSE(app, argc, argv);
  if (all || selected.empty())
    for (int i = 1; i <= 11; ++i) selected.push_back(i);
  g_work = fs::absolute(work);
  fs::create_directories(g_work);

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"gradient soundness", criterion_1}},
      {2, {"oracle equivalence", criterion_2}},
      {3, {"geometry exactness", criterion_3}},
      {4, {"model-fit round trip", criterion_4}},
      {5, {"loss spot values", criterion_5}},
      {6, {"schedule exactness", criterion_6}},
      {7, {"smoke training", criterion_7}},
      {8, {"stacking trend", criterion_8}},
      {9, {"gazemap pipeline", criterion_9}},
      {10, {"personalization", criterion_10}},
      {11, {"reproducibility", [&] { return criterion_11(cli); }}},
  };
  int failed = 0;
  for (int id : selected) {
    const auto& [name, fn] = criteria.at(id);
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("[%s] criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}

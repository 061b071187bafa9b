#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "gzk/losses.hpp"

using namespace gzk;
using namespace gzk::losses;
using gzk::testing::gradcheck;
using gzk::testing::random_tensor;

namespace {

// Scalar loop oracles, batch mean of per-sample sums.
double oracle_squared(const Tensor<double>& a, const Tensor<double>& b, double w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) acc += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  return w * acc / static_cast<double>(a.dim(0));
}

double oracle_gazemap(const Tensor<double>& logits, const Tensor<double>& truth, double alpha) {
  const Index n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  double acc = 0.0;
  for (Index s = 0; s < n; ++s)
    for (Index p = 0; p < hw; ++p) {
      double mx = -1e300, z = 0.0;
      for (Index k = 0; k < c; ++k) mx = std::max(mx, logits.data()[static_cast<std::size_t>((s * c + k) * hw + p)]);
      for (Index k = 0; k < c; ++k) z += std::exp(logits.data()[static_cast<std::size_t>((s * c + k) * hw + p)] - mx);
      for (Index k = 0; k < c; ++k) {
        const auto i = static_cast<std::size_t>((s * c + k) * hw + p);
        acc += truth.data()[i] * std::log(std::exp(logits.data()[i] - mx) / z + kGazemapLogEps);
      }
    }
  return -alpha * acc / static_cast<double>(n);
}

Tensor<double> one_hot_random(Shape shape, Rng& rng) {
  std::vector<double> d(static_cast<std::size_t>(numel(shape)), 0.0);
  const Index c = shape[1], hw = shape[2] * shape[3];
  for (Index s = 0; s < shape[0]; ++s)
    for (Index p = 0; p < hw; ++p) d[static_cast<std::size_t>((s * c + rng.integer(0, c - 1)) * hw + p)] = 1.0;
  return Tensor<double>::from(std::move(shape), std::move(d));
}

}  // namespace

TEST_CASE("loss spot values") {
  const auto g_pred = Tensor<double>::from({1, 2}, {0.3, 0.4});
  const auto g_true = Tensor<double>::from({1, 2}, {0.0, 0.0});
  CHECK(loss_gaze(g_pred, g_true).item() == doctest::Approx(0.25).epsilon(1e-15));

  const auto r_pred = Tensor<double>::from({1, 1}, {1020.0});
  const auto r_true = Tensor<double>::from({1, 1}, {20.0});
  CHECK(loss_radius(r_pred, r_true, LossWeights{}.beta_rad).item() == doctest::Approx(0.1).epsilon(1e-15));

  auto h_pred = Tensor<double>::zeros({1, 18, 4, 4});
  auto h_true = Tensor<double>::zeros({1, 18, 4, 4});
  h_pred.mutable_data()[5] = 0.5;
  CHECK(loss_heatmaps(h_pred, h_true, 1.0).item() == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(loss_heatmaps(h_true, h_true, 1.0).item() == 0.0);

  // uniform logits on a 64x96 map: alpha * 6144 * ln 3
  const auto logits = Tensor<double>::zeros({1, 3, 64, 96});
  auto truth = Tensor<double>::zeros({1, 3, 64, 96});
  for (Index p = 0; p < 64 * 96; ++p) truth.mutable_data()[static_cast<std::size_t>(p)] = 1.0;
  CHECK(std::abs(loss_gazemap(logits, truth, LossWeights{}.alpha_gm).item() - 0.06750) <= 1e-4);
}

TEST_CASE("losses match loop oracles") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = random_tensor<double>({3, 18, 8, 12}, rng), b = random_tensor<double>({3, 18, 8, 12}, rng);
    CHECK(loss_heatmaps(a, b, 0.7).item() == doctest::Approx(oracle_squared(a, b, 0.7)).epsilon(1e-12));
    const auto r1 = random_tensor<double>({4, 1}, rng, 10, 30), r2 = random_tensor<double>({4, 1}, rng, 10, 30);
    CHECK(loss_radius(r1, r2, 1e-7).item() == doctest::Approx(oracle_squared(r1, r2, 1e-7)).epsilon(1e-12));
    const auto g1 = random_tensor<double>({4, 2}, rng), g2 = random_tensor<double>({4, 2}, rng);
    CHECK(loss_gaze(g1, g2).item() == doctest::Approx(oracle_squared(g1, g2, 1.0)).epsilon(1e-12));
    const auto lg = random_tensor<double>({2, 3, 8, 12}, rng, -4, 4);
    const auto oh = one_hot_random({2, 3, 8, 12}, rng);
    CHECK(loss_gazemap(lg, oh, 1e-5).item() == doctest::Approx(oracle_gazemap(lg, oh, 1e-5)).epsilon(1e-12));
  }
}

TEST_CASE("losses are linear in their weights and invariant to batch order") {
  Rng rng(32);
  const auto a = random_tensor<double>({4, 18, 4, 6}, rng), b = random_tensor<double>({4, 18, 4, 6}, rng);
  const double base = loss_heatmaps(a, b, 1.0).item();
  for (double w : {0.0, 0.5, 3.0}) CHECK(loss_heatmaps(a, b, w).item() == doctest::Approx(w * base).epsilon(1e-14));
  const auto lg = random_tensor<double>({4, 3, 4, 6}, rng, -3, 3);
  const auto oh = one_hot_random({4, 3, 4, 6}, rng);
  const double gm = loss_gazemap(lg, oh, 1.0).item();
  CHECK(loss_gazemap(lg, oh, 2e-5).item() == doctest::Approx(2e-5 * gm).epsilon(1e-12));

  // reverse the batch order
  auto reversed = [](const Tensor<double>& t) {
    const Index n = t.dim(0), per = t.numel() / n;
    std::vector<double> d(t.data().size());
    for (Index s = 0; s < n; ++s)
      std::copy_n(t.data().begin() + (n - 1 - s) * per, per, d.begin() + s * per);
    return Tensor<double>::from(t.shape(), std::move(d));
  };
  CHECK(loss_heatmaps(reversed(a), reversed(b), 1.0).item() == doctest::Approx(base).epsilon(1e-13));
  CHECK(loss_gazemap(reversed(lg), reversed(oh), 1.0).item() == doctest::Approx(gm).epsilon(1e-13));
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(33);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = random_tensor<double>({2, 18, 4, 4}, rng, -1, 1, true);
    auto b = random_tensor<double>({2, 18, 4, 4}, rng);
    auto r = gradcheck<double>([&](std::vector<Tensor<double>>& in) { return loss_heatmaps(in[0], b, 0.3); }, {a}, seed);
    CHECK(r.rel_error < 1e-6);

    auto rp = random_tensor<double>({3, 1}, rng, 10, 30, true);
    auto rt = random_tensor<double>({3, 1}, rng, 10, 30);
    r = gradcheck<double>([&](std::vector<Tensor<double>>& in) { return loss_radius(in[0], rt, 1e-3); }, {rp}, seed);
    CHECK(r.rel_error < 1e-6);

    auto gp = random_tensor<double>({3, 2}, rng, -1, 1, true);
    auto gt = random_tensor<double>({3, 2}, rng);
    r = gradcheck<double>([&](std::vector<Tensor<double>>& in) { return loss_gaze(in[0], gt); }, {gp}, seed);
    CHECK(r.rel_error < 1e-6);

    auto lg = random_tensor<double>({2, 3, 4, 6}, rng, -3, 3, true);
    const auto oh = one_hot_random({2, 3, 4, 6}, rng);
    r = gradcheck<double>([&](std::vector<Tensor<double>>& in) { return loss_gazemap(in[0], oh, 0.1); }, {lg}, seed);
    CHECK(r.rel_error < 1e-6);
  }
}

TEST_CASE("objectives sum their terms") {
  const eye::Dims dims{32, 48};
  nn::HourglassConfig cfg;
  cfg.n_stacks = 4;
  cfg.n_features = 8;
  nn::LandmarkNet<double> net(cfg, dims, 2);
  Rng rng(34);
  const auto x = random_tensor<double>({2, 1, 32, 48}, rng, 0, 1);
  const auto hm = random_tensor<double>({2, 18, 32, 48}, rng, 0, 1);
  const auto rad = random_tensor<double>({2, 1}, rng, 16, 24);
  const auto out = net.forward(x, nn::Mode::eval);
  const LossWeights w;
  const auto obj = landmark_objective(out, hm, rad, w);
  REQUIRE(obj.terms.size() == 5);
  double expect = 0.0;
  for (const auto& h : out.heatmaps) expect += oracle_squared(h, hm, w.alpha_hm);
  expect += oracle_squared(out.radius, rad, w.beta_rad);
  CHECK(obj.total.item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(obj.heatmaps + obj.radius == doctest::Approx(expect).epsilon(1e-12));

  nn::HourglassConfig small;
  small.n_features = 8;
  nn::GazemapNet<double> gnet(small, nn::DenseNetConfig{}, dims, 3);
  const auto gout = gnet.forward(x, nn::Mode::eval);
  const auto gt = random_tensor<double>({2, 2}, rng);
  const auto gm = one_hot_random({2, 3, 32, 48}, rng);
  const auto gobj = gazemap_objective(gout, gt, gm, w);
  REQUIRE(gobj.terms.size() == 2);
  CHECK(gobj.total.item() ==
        doctest::Approx(oracle_squared(gout.gaze, gt, 1.0) + oracle_gazemap(gout.gazemaps.back(), gm, w.alpha_gm))
            .epsilon(1e-12));
}

TEST_CASE("loss shape mismatches throw") {
  const auto a = Tensor<float>::zeros({1, 18, 4, 4}), b = Tensor<float>::zeros({1, 18, 4, 6});
  CHECK_THROWS_AS(loss_heatmaps(a, b, 1.0), ShapeError);
  CHECK_THROWS_AS(loss_gaze(Tensor<float>::zeros({2, 2}), Tensor<float>::zeros({1, 2})), ShapeError);
  CHECK_THROWS_AS(loss_gazemap(a, a, 1.0), ShapeError);
}

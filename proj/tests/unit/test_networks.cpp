#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gradcheck.hpp"
#include "gzk/networks.hpp"
#include "gzk/reference.hpp"

using namespace gzk;
using namespace gzk::nn;
using gzk::testing::random_tensor;

namespace {

// Independent parameter-count walk of the architectures.
Index walk_bn(Index c) { return 2 * c; }
Index walk_conv(Index in, Index out, Index k, bool bias) { return in * out * k * k + (bias ? out : 0); }
Index walk_residual(Index c) {
  const Index h = c / 2;
  return walk_bn(c) + walk_conv(c, h, 1, false) + walk_bn(h) + walk_conv(h, h, 3, false) + walk_bn(h) +
         walk_conv(h, c, 1, true);
}
Index walk_hourglass(int depth, Index c) {
  return 3 * walk_residual(c) + (depth > 1 ? walk_hourglass(depth - 1, c) : walk_residual(c));
}
Index walk_landmark(int stacks, Index c) {
  Index n = walk_conv(1, c, 7, false) + walk_bn(c) + walk_residual(c);
  for (int s = 0; s < stacks; ++s) {
    n += walk_hourglass(3, c) + walk_residual(c) + walk_conv(c, c, 1, false) + walk_bn(c) + walk_conv(c, 18, 1, true);
    if (s + 1 < stacks) n += walk_conv(c, c, 1, true) + walk_conv(18, c, 1, true);
  }
  n += (36 * 100 + 100) + 200 + 2 * (100 * 100 + 100 + 200) + (100 + 1);
  return n;
}

template <typename T>
bool all_finite(std::span<const T> s) {
  return std::all_of(s.begin(), s.end(), [](T v) { return std::isfinite(v); });
}

template <typename Net>
void check_finite_gradients(Net& net) {
  net.visit([](const std::string& name, Tensor<float>& t, Role role) {
    if (role != Role::parameter) return;
    INFO(name);
    REQUIRE(t.has_grad());
    CHECK(all_finite<float>(t.grad()));
  });
}

template <typename Net>
void zero_grads(Net& net) {
  net.visit([](const std::string&, Tensor<float>& t, Role role) {
    if (role == Role::parameter) t.zero_grad();
  });
}

}  // namespace

TEST_CASE("residual block") {
  Rng rng(1);
  SUBCASE("zero branch is the identity") {
    Residual<double> res(8, rng);
    for (Conv2d<double>* c : {&res.conv1, &res.conv2, &res.conv3})
      std::fill(c->weight.mutable_data().begin(), c->weight.mutable_data().end(), 0.0);
    auto x = random_tensor<double>({2, 8, 4, 6}, rng, -1, 1, true);
    auto y = res(x, Mode::eval);
    for (std::size_t i = 0; i < x.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);
    ops::sum(ops::square(y)).backward();
    double norm = 0;
    for (double g : x.grad()) norm += g * g;
    CHECK(norm > 0.0);
  }
  SUBCASE("shape is preserved") {
    for (Index c : {32, 64}) {
      Residual<float> res(c, rng);
      auto y = res(random_tensor<float>({2, c, 8, 12}, rng), Mode::train);
      CHECK(y.shape() == Shape{2, c, 8, 12});
    }
  }
  CHECK_THROWS_AS(Residual<float>(7, rng), ShapeError);
}

TEST_CASE("hourglass module") {
  Rng rng(2);
  Hourglass<float> hg(3, 32, rng);
  auto x = random_tensor<float>({1, 32, 64, 96}, rng);
  auto y = hg(x, Mode::eval);
  CHECK(y.shape() == Shape{1, 32, 64, 96});
  const auto y2 = hg(x, Mode::eval);
  CHECK(std::equal(y.data().begin(), y.data().end(), y2.data().begin()));

  SUBCASE("a corner pixel reaches outputs more than half the width away") {
    auto xp = x.clone();
    for (Index c = 0; c < 32; ++c) xp.mutable_data()[static_cast<std::size_t>(c * 64 * 96)] += 50.0f;
    auto yp = hg(xp, Mode::eval);
    double reach = 0.0;
    for (Index c = 0; c < 32; ++c)
      for (Index r = 0; r < 64; ++r)
        for (Index col = 0; col < 96; ++col) {
          const auto i = static_cast<std::size_t>((c * 64 + r) * 96 + col);
          if (yp.data()[i] != y.data()[i]) reach = std::max(reach, std::hypot(double(r), double(col)));
        }
    CHECK(reach > 48.0);
  }
  CHECK_THROWS_AS(hg(random_tensor<float>({1, 32, 12, 16}, rng), Mode::eval), ShapeError);
}

TEST_CASE("landmark network") {
  const eye::Dims dims{64, 96};
  LandmarkNet<float> net(HourglassConfig{}, dims, 11);
  CHECK(count_parameters<float>(net) == walk_landmark(2, 32));

  Rng rng(3);
  auto out = net.forward(random_tensor<float>({2, 1, 64, 96}, rng, 0, 1), Mode::train);
  CHECK(out.heatmaps.size() == 2);
  CHECK(out.heatmaps[0].shape() == Shape{2, 18, 64, 96});
  CHECK(out.landmarks.shape() == Shape{2, 18, 2});
  CHECK(out.radius.shape() == Shape{2, 1});
  for (auto& h : out.heatmaps) CHECK(all_finite<float>(h.data()));
  CHECK(all_finite<float>(out.radius.data()));
  // fresh heatmap heads emit zeros, so soft-argmax starts at the image centre
  for (auto& h : out.heatmaps) CHECK(std::all_of(h.data().begin(), h.data().end(), [](float v) { return v == 0.0f; }));
  CHECK(out.landmarks.data()[0] == doctest::Approx(47.5).epsilon(1e-5));
  CHECK(out.landmarks.data()[1] == doctest::Approx(31.5).epsilon(1e-5));

  for (int stacks : {1, 3, 8}) {
    HourglassConfig cfg;
    cfg.n_stacks = stacks;
    LandmarkNet<float> n(cfg, dims, 5);
    CHECK(count_parameters<float>(n) == walk_landmark(stacks, 32));
  }
  HourglassConfig wide;
  wide.n_features = 64;
  CHECK(count_parameters<float>(LandmarkNet<float>(wide, dims, 5)) == walk_landmark(2, 64));
  CHECK_THROWS_AS(LandmarkNet<float>(HourglassConfig{}, eye::Dims{60, 96}, 1), std::invalid_argument);

  SUBCASE("temperature is configurable") {
    HourglassConfig soft;
    soft.n_features = 8;
    soft.temperature = 2.0;
    CHECK(hourglass_from_json(to_json(soft)).temperature == 2.0);
    auto x = random_tensor<float>({1, 1, 64, 96}, rng, 0, 1);
    auto ys = LandmarkNet<float>(soft, dims, 4).forward(x, Mode::eval);
    const auto expect = ops::soft_argmax(ys.heatmaps.back(), 2.0f);
    CHECK(std::equal(ys.landmarks.data().begin(), ys.landmarks.data().end(), expect.data().begin()));
    soft.temperature = 0.0;
    CHECK_THROWS_AS(soft.validate(dims), std::invalid_argument);
  }
}

TEST_CASE("dense block and transition") {
  Rng rng(4);
  DenseBlock<double> block(16, 6, 8, rng);
  CHECK(block.out_channels == 64);
  auto x = random_tensor<double>({2, 16, 4, 6}, rng, -1, 1, true);
  auto y = block(x, Mode::train);
  CHECK(y.shape() == Shape{2, 64, 4, 6});

  SUBCASE("gradient reaches the input with any one layer zeroed") {
    for (std::size_t zeroed = 0; zeroed < block.layers.size(); ++zeroed) {
      DenseBlock<double> b(16, 6, 8, rng);
      for (Conv2d<double>* c : {&b.layers[zeroed].conv1, &b.layers[zeroed].conv2})
        std::fill(c->weight.mutable_data().begin(), c->weight.mutable_data().end(), 0.0);
      auto xi = random_tensor<double>({2, 16, 4, 6}, rng, -1, 1, true);
      ops::sum(ops::square(b(xi, Mode::train))).backward();
      double norm = 0;
      for (double g : xi.grad()) norm += g * g;
      CHECK(norm > 0.0);
      // the zeroed layer stays on the backward path
      CHECK(b.layers[zeroed].conv2.weight.has_grad());
    }
  }

  Transition<double> t(64, rng);
  auto tx = random_tensor<double>({1, 64, 32, 48}, rng);
  auto ty = t(tx, Mode::eval);
  CHECK(ty.shape() == Shape{1, 32, 16, 24});
  CHECK(Transition<float>(7, rng).out_channels == 4);

  // pooling stage against the loop oracle
  auto pre = t.conv(t.bn(tx, Mode::eval));
  const std::vector<double> pre_v(pre.data().begin(), pre.data().end());
  const auto expect = reference::avg_pool(pre_v, pre.shape(), 2);
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(ty.data()[i] - expect[i]) <= 1e-12);
  CHECK_THROWS_AS(t(random_tensor<double>({1, 64, 5, 6}, rng), Mode::eval), ShapeError);
}

TEST_CASE("gazemap network") {
  const eye::Dims dims{64, 96};
  GazemapNet<float> net(HourglassConfig{}, DenseNetConfig{}, dims, 9);
  CHECK(net.channel_trace() == std::vector<Index>{16, 56, 28, 68, 34, 74, 37, 77, 39, 79});
  Rng rng(6);
  auto out = net.forward(random_tensor<float>({2, 1, 64, 96}, rng, 0, 1), Mode::train);
  CHECK(out.gazemaps.size() == 1);
  CHECK(out.gazemaps[0].shape() == Shape{2, 3, 64, 96});
  CHECK(out.gaze.shape() == Shape{2, 2});
  CHECK(all_finite<float>(out.gaze.data()));

  for (int blocks : {4, 5, 6})
    for (int layers : {3, 5, 6}) {
      DenseNetConfig dn;
      dn.n_blocks = blocks;
      dn.layers_per_block = layers;
      GazemapNet<float> n(HourglassConfig{}, dn, dims, 1);
      CHECK(n.channel_trace().size() == static_cast<std::size_t>(2 * blocks));
      // trace: stem 16, then +layers*8 per block, halving (rounded up) between blocks
      Index c = 16;
      for (int b = 0; b < blocks; ++b) {
        c += layers * 8;
        if (b + 1 < blocks) c = (c + 1) / 2;
      }
      CHECK(n.channel_trace().back() == c);
    }
  DenseNetConfig bad;
  bad.compression = 0.4;
  CHECK_THROWS_AS(GazemapNet<float>(HourglassConfig{}, bad, dims, 1), std::invalid_argument);
}

TEST_CASE("forward and backward leave finite gradients") {
  Rng rng(7);
  HourglassConfig small;
  small.n_features = 8;
  LandmarkNet<float> lm(small, eye::Dims{32, 48}, 3);
  GazemapNet<float> gm(small, DenseNetConfig{}, eye::Dims{32, 48}, 4);
  for (int seed = 0; seed < 10; ++seed) {
    auto x = random_tensor<float>({2, 1, 32, 48}, rng, 0, 1);
    zero_grads(lm);
    auto lo = lm.forward(x, Mode::train);
    ops::add(ops::sum(ops::square(lo.heatmaps.back())), ops::sum(lo.radius)).backward();
    check_finite_gradients(lm);
    zero_grads(gm);
    auto go = gm.forward(x, Mode::train);
    ops::add(ops::sum(go.gaze), ops::sum(ops::square(go.gazemaps[0]))).backward();
    check_finite_gradients(gm);
  }
}

TEST_CASE("network checkpoint round trip is bit-exact") {
  const eye::Dims dims{32, 48};
  HourglassConfig cfg;
  cfg.n_features = 8;
  LandmarkNet<float> a(cfg, dims, 21);
  Rng rng(8);
  auto x = random_tensor<float>({3, 1, 32, 48}, rng, 0, 1);
  a.forward(x, Mode::train);  // move running statistics away from their defaults
  const auto path = std::filesystem::temp_directory_path() / "gzk_net_ckpt.gzk";
  save_checkpoint(path, state_of<float>(a), {{"hourglass", to_json(cfg)}});
  LandmarkNet<float> b(hourglass_from_json(read_checkpoint_meta(path)["hourglass"]), dims, 99);
  load_state(b, load_checkpoint<float>(path));
  const auto ya = a.forward(x, Mode::eval), yb = b.forward(x, Mode::eval);
  CHECK(std::equal(ya.radius.data().begin(), ya.radius.data().end(), yb.radius.data().begin()));
  CHECK(std::equal(ya.heatmaps[1].data().begin(), ya.heatmaps[1].data().end(), yb.heatmaps[1].data().begin()));

  HourglassConfig other = cfg;
  other.n_stacks = 3;
  LandmarkNet<float> c(other, dims, 1);
  CHECK_THROWS(load_state(c, load_checkpoint<float>(path)));
  std::filesystem::remove(path);
}

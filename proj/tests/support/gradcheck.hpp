#pragma once

// Central finite-difference gradient checking for differentiable ops.
//
// f maps the input tensors to any output; the checked scalar is
// sum(r * f(inputs)) for a fixed random projection r, accumulated in double.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gzk/ops.hpp"
#include "gzk/random.hpp"
#include "gzk/tensor.hpp"

namespace gzk::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (T& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::from(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (T& v : data) v = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>::from(std::move(shape), std::move(data), requires_grad);
}

struct GradCheckReport {
  double rel_error = 0.0;  // worst input, norm-wise
  std::string worst_input;
};

template <typename T>
constexpr T default_step() {
  return sizeof(T) == 4 ? T(1e-3) : T(1e-6);
}

template <typename T>
constexpr double default_tolerance() {
  return sizeof(T) == 4 ? 1e-3 : 1e-5;
}

/// Compares backward() gradients against central differences for every
/// input that requires a gradient. At most max_probes elements per input are
/// perturbed (chosen deterministically from the seed).
template <typename T, typename F>
GradCheckReport gradcheck(F&& f, std::vector<Tensor<T>> inputs, std::uint64_t seed, T h = default_step<T>(),
                          std::size_t max_probes = 48) {
  Rng rng(seed);
  for (auto& in : inputs)
    if (in.requires_grad()) in.zero_grad();

  Tensor<T> out = f(inputs);
  std::vector<T> proj(static_cast<std::size_t>(out.numel()));
  for (T& v : proj) v = static_cast<T>(rng.normal());
  const Tensor<T> proj_t = Tensor<T>::from(out.shape(), proj);
  ops::sum(ops::mul(out, proj_t)).backward();

  auto objective = [&]() {
    NoGradGuard guard;
    const Tensor<T> y = f(inputs);
    double acc = 0.0;
    const auto yd = y.data();
    for (std::size_t i = 0; i < yd.size(); ++i) acc += static_cast<double>(yd[i]) * static_cast<double>(proj[i]);
    return acc;
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<T>& in = inputs[k];
    if (!in.requires_grad()) continue;
    const std::vector<T> analytic(in.grad().begin(), in.grad().end());
    std::vector<std::size_t> probes(static_cast<std::size_t>(in.numel()));
    for (std::size_t i = 0; i < probes.size(); ++i) probes[i] = i;
    if (probes.size() > max_probes) {
      for (std::size_t i = 0; i < max_probes; ++i)
        std::swap(probes[i], probes[i + static_cast<std::size_t>(rng.integer(0, probes.size() - i - 1))]);
      probes.resize(max_probes);
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t idx : probes) {
      T& slot = in.mutable_data()[idx];
      const T original = slot;
      slot = original + h;
      const T up = slot;
      const double f_up = objective();
      slot = original - h;
      const T down = slot;
      const double f_down = objective();
      slot = original;
      const double numeric = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
      const double a = static_cast<double>(analytic[idx]);
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    const double rel = std::sqrt(diff2) / denom;
    if (rel >= report.rel_error) {
      report.rel_error = rel;
      report.worst_input = "input " + std::to_string(k);
    }
  }
  return report;
}

}  // namespace gzk::testing

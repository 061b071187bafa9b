#include "gzk/losses.hpp"

namespace gzk::losses {

namespace {

template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": prediction " + to_string(a.shape()) + " does not match target " +
                     to_string(b.shape()));
}

/// factor * sum(x) / N for a batch-leading tensor.
template <typename T>
Tensor<T> batch_scaled_sum(const Tensor<T>& x, double factor) {
  return ops::scale(ops::sum(x), static_cast<T>(factor / static_cast<double>(x.dim(0))));
}

template <typename T>
double value(const Tensor<T>& t) {
  return static_cast<double>(t.item());
}

}  // namespace

template <typename T>
Tensor<T> loss_heatmaps(const Tensor<T>& pred, const Tensor<T>& truth, double alpha_hm) {
  require_same("loss_heatmaps", pred, truth);
  return batch_scaled_sum(ops::square(ops::sub(pred, truth)), alpha_hm);
}

template <typename T>
Tensor<T> loss_radius(const Tensor<T>& pred, const Tensor<T>& truth, double beta_rad) {
  require_same("loss_radius", pred, truth);
  return batch_scaled_sum(ops::square(ops::sub(pred, truth)), beta_rad);
}

template <typename T>
Tensor<T> loss_gaze(const Tensor<T>& pred, const Tensor<T>& truth) {
  require_same("loss_gaze", pred, truth);
  return batch_scaled_sum(ops::square(ops::sub(pred, truth)), 1.0);
}

template <typename T>
Tensor<T> loss_gazemap(const Tensor<T>& logits, const Tensor<T>& truth_one_hot, double alpha_gm) {
  require_same("loss_gazemap", logits, truth_one_hot);
  if (logits.rank() != 4 || logits.dim(1) != eye::kGazemapClasses)
    throw ShapeError("loss_gazemap: expected [N,3,H,W] logits, got " + to_string(logits.shape()));
  const Tensor<T> log_p = ops::log(ops::softmax_channels(logits), static_cast<T>(kGazemapLogEps));
  return batch_scaled_sum(ops::mul(truth_one_hot, log_p), -alpha_gm);
}

template <typename T>
Objective<T> landmark_objective(const nn::LandmarkOutput<T>& out, const Tensor<T>& truth_heatmaps,
                                const Tensor<T>& truth_radius, const LossWeights& w) {
  Objective<T> obj;
  for (const Tensor<T>& hm : out.heatmaps) {
    obj.terms.push_back(loss_heatmaps(hm, truth_heatmaps, w.alpha_hm));
    obj.heatmaps += value(obj.terms.back());
  }
  obj.terms.push_back(loss_radius(out.radius, truth_radius, w.beta_rad));
  obj.radius = value(obj.terms.back());
  obj.total = obj.terms.front();
  for (std::size_t i = 1; i < obj.terms.size(); ++i) obj.total = ops::add(obj.total, obj.terms[i]);
  return obj;
}

template <typename T>
Objective<T> gazemap_objective(const nn::GazemapOutput<T>& out, const Tensor<T>& truth_gaze,
                               const Tensor<T>& truth_gazemap, const LossWeights& w) {
  Objective<T> obj;
  obj.terms.push_back(loss_gaze(out.gaze, truth_gaze));
  obj.gaze = value(obj.terms.back());
  obj.terms.push_back(loss_gazemap(out.gazemaps.back(), truth_gazemap, w.alpha_gm));
  obj.gazemap = value(obj.terms.back());
  obj.total = ops::add(obj.terms[0], obj.terms[1]);
  return obj;
}

#define GZK_INSTANTIATE(T)                                                                                    \
  template Tensor<T> loss_heatmaps<T>(const Tensor<T>&, const Tensor<T>&, double);                            \
  template Tensor<T> loss_radius<T>(const Tensor<T>&, const Tensor<T>&, double);                              \
  template Tensor<T> loss_gaze<T>(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> loss_gazemap<T>(const Tensor<T>&, const Tensor<T>&, double);                             \
  template Objective<T> landmark_objective<T>(const nn::LandmarkOutput<T>&, const Tensor<T>&, const Tensor<T>&, \
                                              const LossWeights&);                                            \
  template Objective<T> gazemap_objective<T>(const nn::GazemapOutput<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                             const LossWeights&);

GZK_INSTANTIATE(float)
GZK_INSTANTIATE(double)

}  // namespace gzk::losses

#pragma once

// Dense row-major tensors with a dynamic reverse-mode gradient graph.
//
// A Tensor is a shared handle. Ops that receive at least one input which
// requires a gradient attach a Node to their output; backward() walks those
// nodes in reverse topological order and frees the graph as it goes, so a
// graph can be differentiated once.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gzk {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Thrown for rank/extent violations; the message names the shapes involved.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
struct Node;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty means absent
  bool requires_grad = false;
  std::shared_ptr<Node<T>> grad_fn;

  bool has_grad() const { return !grad.empty(); }
  bool is_leaf() const { return grad_fn == nullptr; }
  /// Allocates a zero gradient on first use.
  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
struct Node {
  using Backward = std::function<void(Node&, std::span<const T>)>;

  std::string name;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::weak_ptr<TensorImpl<T>> output;
  Backward backward;
  bool consumed = false;

  /// True when input i participates in differentiation.
  bool needs(std::size_t i) const { return inputs[i] && inputs[i]->requires_grad; }
  std::span<T> grad_of(std::size_t i) { return inputs[i]->grad_buffer(); }
  std::span<const T> data_of(std::size_t i) const { return inputs[i]->data; }
};

/// Thread-local switch for graph recording (evaluation runs without it).
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false) { return from({1}, {value}, requires_grad); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  Index dim(std::size_t axis) const { return impl().shape.at(axis); }
  std::size_t rank() const { return impl().shape.size(); }
  Index numel() const { return static_cast<Index>(impl().data.size()); }

  std::span<const T> data() const { return impl().data; }
  /// Mutable storage. Only meaningful on leaves (parameter updates, inputs).
  std::span<T> mutable_data() { return impl().data; }
  T item() const;
  T at(std::initializer_list<Index> index) const;

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return impl().is_leaf(); }
  bool has_grad() const { return impl().has_grad(); }
  std::span<const T> grad() const;
  void zero_grad() {
    impl().grad.clear();
    impl().grad.shrink_to_fit();
  }

  /// Populates gradients of every requires_grad tensor reachable from this
  /// scalar. Throws GraphError on a consumed graph or on leaves that still
  /// carry a gradient from an earlier pass.
  void backward() const;

  /// Same data, no graph history.
  Tensor detach() const;
  Tensor clone() const;

  TensorImpl<T>& impl() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
  }
  const std::shared_ptr<TensorImpl<T>>& handle() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Builds the output of an op: records a node when grad mode is on and any
/// input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string name,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      typename Node<T>::Backward backward);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gzk

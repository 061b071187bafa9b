#include "gzk/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace gzk {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  for (Index e : shape)
    if (e <= 0) throw ShapeError("non-positive extent in shape " + to_string(shape));
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->data.assign(static_cast<std::size_t>(gzk::numel(shape)), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  for (Index e : shape)
    if (e <= 0) throw ShapeError("non-positive extent in shape " + to_string(shape));
  if (gzk::numel(shape) != static_cast<Index>(data.size()))
    throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(data.size()) +
                     " values");
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl().data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<Index> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + to_string(s));
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= s[axis]) throw std::out_of_range("index out of range for " + to_string(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl().data[static_cast<std::size_t>(flat)];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw GraphError("requires_grad can only be changed on leaf tensors");
  impl().requires_grad = on;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw GraphError("tensor has no gradient");
  return impl().grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto impl_copy = std::make_shared<TensorImpl<T>>();
  impl_copy->shape = impl().shape;
  impl_copy->data = impl().data;
  return Tensor(std::move(impl_copy));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return detach();
}

template <typename T>
void Tensor<T>::backward() const {
  TensorImpl<T>& root = impl();
  if (root.data.size() != 1)
    throw GraphError("backward() requires a scalar loss, got shape " + to_string(root.shape));
  if (!root.requires_grad) throw GraphError("backward() on a tensor that does not require grad");
  if (root.grad_fn && root.grad_fn->consumed)
    throw GraphError("backward() called twice on the same graph");

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::vector<TensorImpl<T>*> leaves;
  std::unordered_set<const void*> seen;
  if (root.grad_fn) {
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.grad_fn.get(), 0);
    seen.insert(root.grad_fn.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        TensorImpl<T>* in = node->inputs[next++].get();
        if (!in || !in->requires_grad) continue;
        if (in->grad_fn) {
          if (in->grad_fn->consumed) throw GraphError("graph segment already consumed by backward()");
          if (seen.insert(in->grad_fn.get()).second) stack.emplace_back(in->grad_fn.get(), 0);
        } else if (seen.insert(in).second) {
          leaves.push_back(in);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  } else {
    leaves.push_back(&root);
  }

  for (TensorImpl<T>* leaf : leaves)
    if (leaf->has_grad())
      throw GraphError("leaf gradient already populated; call zero_grad() before another backward()");

  // Outputs stay alive for the whole pass: consumers release their inputs
  // before producers run, and some producers read their own output.
  std::vector<std::shared_ptr<TensorImpl<T>>> outputs;
  outputs.reserve(order.size());
  for (Node<T>* node : order) outputs.push_back(node->output.lock());

  root.grad.assign(1, T(1));
  for (std::size_t k = order.size(); k-- > 0;) {
    Node<T>& node = *order[k];
    TensorImpl<T>* out = outputs[k].get();
    if (out && out->has_grad() && node.backward) node.backward(node, std::span<const T>(out->grad));
    if (out && out != &root) {
      out->grad.clear();
      out->grad.shrink_to_fit();
    }
    node.backward = nullptr;
    node.consumed = true;
  }
  for (Node<T>* node : order) node->inputs.clear();
  if (root.grad_fn) {
    root.grad.clear();
    root.grad.shrink_to_fit();
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string name,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      typename Node<T>::Backward backward) {
  auto out = std::make_shared<TensorImpl<T>>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  bool track = false;
  if (GradMode::enabled())
    for (const auto& in : inputs)
      if (in && in->requires_grad) track = true;
  if (track) {
    auto node = std::make_shared<Node<T>>();
    node->name = std::move(name);
    node->inputs = std::move(inputs);
    node->output = out;
    node->backward = std::move(backward);
    out->grad_fn = std::move(node);
    out->requires_grad = true;
  }
  return Tensor<T>(std::move(out));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::string,
                                   std::vector<std::shared_ptr<TensorImpl<float>>>, Node<float>::Backward);
template Tensor<double> make_result(Shape, std::vector<double>, std::string,
                                    std::vector<std::shared_ptr<TensorImpl<double>>>, Node<double>::Backward);

}  // namespace gzk

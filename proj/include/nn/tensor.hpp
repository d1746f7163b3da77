#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

namespace nn {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Raised when a forward value or a gradient stops being finite while
/// checked mode is on.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::atomic<bool>& checked_flag() {
  static std::atomic<bool> flag{true};
  return flag;
}
}  // namespace detail

inline void set_checked_mode(bool on) { detail::checked_flag() = on; }
inline bool checked_mode() { return detail::checked_flag(); }

namespace detail {
inline int& no_grad_depth() {
  thread_local int depth = 0;
  return depth;
}
}  // namespace detail

/// Ops created while a guard is alive record no graph.
struct NoGradGuard {
  NoGradGuard() { ++detail::no_grad_depth(); }
  ~NoGradGuard() { --detail::no_grad_depth(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <class S>
using Array = Eigen::Array<S, Eigen::Dynamic, 1>;
template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct Node {
  Shape shape;
  Array<S> value;
  Array<S> grad;  ///< empty until something flows into it
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;
  bool requires_grad = false;
  bool consumed = false;

  Array<S>& grad_buffer() {
    if (grad.size() != value.size()) grad = Array<S>::Zero(value.size());
    return grad;
  }
};

/// Handle to a node of the dynamic graph. Copies share the node.
template <class S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Tensor constant(Shape shape, Array<S> value) {
    return leaf(std::move(shape), std::move(value), false);
  }
  static Tensor leaf(Shape shape, Array<S> value, bool requires_grad) {
    if (numel(shape) != static_cast<std::size_t>(value.size())) {
      throw std::invalid_argument("tensor: value size does not match shape " +
                                  shape_str(shape));
    }
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = static_cast<Eigen::Index>(numel(shape));
    return leaf(std::move(shape), Array<S>::Zero(n), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  Eigen::Index size() const { return node_->value.size(); }
  Array<S>& value() { return node_->value; }
  const Array<S>& value() const { return node_->value; }
  Array<S>& grad() { return node_->grad_buffer(); }
  const Array<S>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  S item() const {
    if (node_->value.size() != 1) throw std::invalid_argument("item() on a non-scalar tensor");
    return node_->value[0];
  }
  Node<S>* node() const { return node_.get(); }
  const std::shared_ptr<Node<S>>& ptr() const { return node_; }

  void zero_grad() {
    if (node_->grad.size()) node_->grad.setZero();
  }

  /// Reverse-mode sweep from a scalar. Leaf gradients accumulate; the graph
  /// above the leaves is released afterwards, so a second call throws.
  void backward() {
    if (node_->value.size() != 1) throw std::invalid_argument("backward() needs a scalar loss");
    if (node_->consumed) {
      throw std::logic_error("backward called twice on the same graph");
    }
    std::vector<Node<S>*> order;
    std::unordered_set<Node<S>*> seen;
    std::vector<std::pair<Node<S>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<S>* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->grad_buffer().setConstant(S(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<S>* n = *it;
      if (n->backward && n->grad.size()) n->backward();
    }
    for (Node<S>* n : order) {
      if (!n->parents.empty()) {
        n->backward = nullptr;
        n->parents.clear();
      }
    }
    node_->consumed = true;
  }

 private:
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <class S>
void check_finite(const Array<S>& v, const char* op) {
  if (checked_mode() && !v.allFinite()) {
    throw NonFiniteError(std::string("non-finite value produced by ") + op);
  }
}

/// Wires a result node. The closure receives the result node so it can read
/// its gradient; it is dropped if no parent needs a gradient.
template <class S, class F>
Tensor<S> make_result(Shape shape, Array<S> value,
                      std::vector<std::shared_ptr<Node<S>>> parents, F&& fn,
                      const char* op) {
  check_finite<S>(value, op);
  auto out = std::make_shared<Node<S>>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  if (no_grad_depth() == 0) {
    for (auto& p : parents) out->requires_grad = out->requires_grad || p->requires_grad;
  }
  if (out->requires_grad) {
    out->parents = std::move(parents);
    Node<S>* self = out.get();
    out->backward = [self, fn = std::forward<F>(fn)]() mutable { fn(*self); };
  }
  return Tensor<S>(std::move(out));
}

}  // namespace detail

/// Trainable tensor with persistent Adam moments.
template <class S>
struct Parameter {
  std::string name;
  Tensor<S> tensor;
  Array<S> m, v;
  long step = 0;

  Parameter() = default;
  Parameter(std::string n, Shape shape, Array<S> init)
      : name(std::move(n)),
        tensor(Tensor<S>::leaf(std::move(shape), std::move(init), true)),
        m(Array<S>::Zero(tensor.size())),
        v(Array<S>::Zero(tensor.size())) {}

  const Shape& shape() const { return tensor.shape(); }
  Array<S>& value() { return tensor.value(); }
  const Array<S>& value() const { return tensor.value(); }
};

}  // namespace nn

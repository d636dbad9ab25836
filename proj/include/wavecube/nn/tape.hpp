#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wavecube/error.hpp"
#include "wavecube/nn/tensor.hpp"

namespace wavecube::nn {

/// Named trainable tensor (or non-trainable buffer such as batch-norm
/// running statistics) with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}
};

/// Handle to a node on a tape.
struct Var {
  std::size_t id = 0;
};

/// Wengert list for reverse-mode differentiation.
///
/// Each op pushes one node holding its output and a closure that moves the
/// node's gradient to its inputs. `backward` walks the list once, in reverse,
/// and the tape cannot be reused afterwards.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Tape() = default;
  /// With `record_grad == false` parameters enter as constants and no
  /// backward closures are kept (inference).
  explicit Tape(bool record_grad) : record_grad_(record_grad) {}

  Var input(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, {});
  }

  /// Registers `p` as a leaf; its gradient is accumulated into `p.grad` on backward.
  Var param(Parameter<T>& p) {
    Var v = push(p.value, p.trainable && record_grad_, {});
    nodes_[v.id].param = &p;
    return v;
  }

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    if (consumed_) throw Error(Errc::consumed_tape, "cannot record on a consumed tape");
    requires_grad = requires_grad && record_grad_;
    nodes_.push_back(Node{std::move(value), {}, requires_grad, nullptr,
                          requires_grad ? std::move(fn) : BackwardFn{}});
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  const Shape5& shape(Var v) const { return nodes_.at(v.id).value.shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  bool any_requires_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs)
      if (requires_grad(v)) return true;
    return false;
  }

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor<T>& grad(Var v) { return grad(v.id); }
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  void backward(Var loss) {
    if (consumed_) throw Error(Errc::consumed_tape, "backward already ran on this tape");
    const Node& l = nodes_.at(loss.id);
    if (l.value.size() != 1)
      throw Error(Errc::shape_mismatch, "backward needs a scalar loss, got " + l.value.shape().str());
    consumed_ = true;
    visit_order_.clear();
    grad(loss).fill(T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      visit_order_.push_back(i);
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        auto& g = n.param->grad.storage();
        if (g.size() != n.grad.size()) g.assign(n.grad.size(), T(0));
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
      }
    }
  }

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  /// Node ids processed by the last `backward`, in processing order.
  const std::vector<std::size_t>& visit_order() const noexcept { return visit_order_; }

 private:
  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
  bool consumed_ = false;
  bool record_grad_ = true;
};

}  // namespace wavecube::nn

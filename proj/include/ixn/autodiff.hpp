#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "ixn/tensor.hpp"

namespace ixn {

// Reverse-mode autodiff over a dynamically recorded graph. Each forward op
// allocates one Node holding its output value, the handles of its inputs and
// a closure that routes the output gradient to the input gradients. The graph
// is rebuilt on every forward pass; parameter nodes persist so their
// gradients accumulate across backward() calls until zero_grad().
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on demand, same shape as value
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // may be empty for leaves
    std::string name;                     // non-empty for parameters

    Tensor<T>& ensure_grad() {
        if (!grad_ready) {
            grad = Tensor<T>(value.shape());
            grad_ready = true;
        }
        return grad;
    }
};

/// Lightweight handle to a graph node; copying shares the node.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    /// Leaf variable. requires_grad marks it as a differentiation target.
    explicit Var(Tensor<T> value, bool requires_grad = false) {
        node_ = std::make_shared<Node<T>>();
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    const Tensor<T>& grad() const { return node_->grad; }
    bool has_grad() const { return node_ && node_->grad_ready; }
    void zero_grad() {
        if (node_) {
            node_->grad = Tensor<T>();
            node_->grad_ready = false;
        }
    }

    std::shared_ptr<Node<T>> node() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Named trainable tensor. The wrapped node persists for the lifetime of the
/// model so optimizers can hold per-parameter state against it.
template <typename T>
struct Parameter {
    Var<T> var;
    std::string name;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> value) : var(std::move(value), true), name(std::move(n)) {
        var.node()->name = name;
    }

    Tensor<T>& tensor() { return var.value(); }
    const Tensor<T>& tensor() const { return var.value(); }
};

namespace detail {

template <typename T>
void topo_visit(const std::shared_ptr<Node<T>>& n,
                std::unordered_set<Node<T>*>& seen,
                std::vector<std::shared_ptr<Node<T>>>& order) {
    if (!n || !n->requires_grad || seen.count(n.get())) return;
    seen.insert(n.get());
    for (const auto& p : n->parents) topo_visit(p, seen, order);
    order.push_back(n);
}

}  // namespace detail

/// Accumulates exact reverse-mode gradients of a scalar loss into every
/// reachable node with requires_grad. Traversal order is a fixed topological
/// order of the recorded graph, so gradient reduction is deterministic.
template <typename T>
void backward(const Var<T>& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined loss");
    if (loss.shape() != Shape{1, 1, 1, 1})
        throw ContractError("backward: loss must be scalar 1x1x1x1, got " +
                            loss.shape().str());
    if (!loss.requires_grad()) return;  // nothing reachable

    std::vector<std::shared_ptr<Node<T>>> order;
    std::unordered_set<Node<T>*> seen;
    detail::topo_visit(loss.node(), seen, order);

    loss.node()->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>& n = **it;
        if (n.backprop && n.grad_ready) n.backprop(n);
    }
}

/// Builds an op node. parents that require grad make the result require grad.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
               std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    for (const auto& p : parents)
        if (p && p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return Var<T>(std::move(n));
}

}  // namespace ixn

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "digcnn/tensor.hpp"

namespace digcnn {

/// Graph recording switch, per thread. While disabled, operations produce
/// constant results with no backward closure.
inline bool& grad_recording() {
    thread_local bool enabled = true;
    return enabled;
}

class NoGradGuard {
public:
    NoGradGuard() : saved_(grad_recording()) { grad_recording() = false; }
    ~NoGradGuard() { grad_recording() = saved_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const noexcept { return parents.empty(); }

    Tensor<T>& ensure_grad() {
        if (grad.empty()) grad = Tensor<T>(value.shape());
        return grad;
    }
};

/// Handle to a node of the define-by-run graph. Copies share the node.
template <typename T>
class Var {
public:
    Var() = default;

    static Var leaf(Tensor<T> value, bool requires_grad = false) {
        auto node = std::make_shared<Node<T>>();
        node->value = std::move(value);
        node->requires_grad = requires_grad;
        return Var(std::move(node));
    }

    /// Result of an operation. Parents and the backward closure are only kept
    /// when some parent requires a gradient.
    static Var op(Tensor<T> value, std::vector<Var> parents, std::function<void(Node<T>&)> backward_fn) {
        auto node = std::make_shared<Node<T>>();
        node->value = std::move(value);
        if (grad_recording()) {
            for (const Var& p : parents) node->requires_grad = node->requires_grad || p.requires_grad();
        }
        if (node->requires_grad) {
            node->parents.reserve(parents.size());
            for (Var& p : parents) node->parents.push_back(std::move(p.node_));
            node->backward_fn = std::move(backward_fn);
        }
        return Var(std::move(node));
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    const Tensor<T>& grad() const { return node_->grad; }
    Tensor<T>& mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.fill(T{0});
    }

    Node<T>* node() const noexcept { return node_.get(); }

private:
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
    std::shared_ptr<Node<T>> node_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; gradients of interior nodes are recomputed from scratch each call.
template <typename T>
void backward(const Var<T>& loss) {
    if (!loss.defined() || loss.value().size() != 1) {
        throw ContractViolation("backward: loss must be a scalar, got shape " +
                                (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
    visited.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node<T>* node : order) {
        if (!node->is_leaf()) {
            node->grad = Tensor<T>(node->value.shape());
        }
    }
    loss.node()->ensure_grad()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (!node->is_leaf() && node->backward_fn) node->backward_fn(*node);
    }
    // Interior grads are no longer needed; release them.
    for (Node<T>* node : order) {
        if (!node->is_leaf()) node->grad = Tensor<T>();
    }
}

}  // namespace digcnn

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tailor/core/tensor.hpp"

namespace tailor {

namespace detail {
inline thread_local bool grad_recording = true;
}

// Disables graph recording on the current thread (inference, target
// features, optimizer bookkeeping).
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_recording) { detail::grad_recording = false; }
    ~NoGradGuard() { detail::grad_recording = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor<T>& grad_buffer() {
        if (grad.empty()) grad = Tensor<T>(value.shape());
        return grad;
    }
};

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false)
        : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    const Tensor<T>& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    const Tensor<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }
    T item() const { return node_->value.item(); }

    const std::shared_ptr<Node<T>>& node() const { return node_; }

    // Same value, cut from the graph.
    Var detach() const { return Var(node_->value, false); }

private:
    std::shared_ptr<Node<T>> node_;
};

// Builds an op result. The backward closure only runs when at least one
// parent needs a gradient and recording is enabled on this thread.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    if (detail::grad_recording) {
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(parents.size());
            for (const auto& p : parents) node->parents.push_back(p.node());
            node->backward = std::move(backward);
        }
    }
    return Var<T>(std::move(node));
}

// Reverse-mode sweep from a scalar root. Gradients accumulate into every
// reachable node that requires them, parameters included.
template <typename T>
void backward(const Var<T>& root) {
    if (!root.requires_grad()) return;
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->grad_buffer().fill(T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

// Trainable tensor with value semantics: copying a Parameter copies its
// storage, so copied networks never alias each other.
template <typename T>
class Parameter {
public:
    Parameter() = default;
    explicit Parameter(Tensor<T> init) : var_(std::move(init), true) {}

    Parameter(const Parameter& other)
        : var_(other.defined() ? Var<T>(other.value(), other.trainable()) : Var<T>()) {}
    Parameter& operator=(const Parameter& other) {
        if (this != &other) {
            var_ = other.defined() ? Var<T>(other.value(), other.trainable()) : Var<T>();
        }
        return *this;
    }
    Parameter(Parameter&&) noexcept = default;
    Parameter& operator=(Parameter&&) noexcept = default;

    bool defined() const { return var_.defined(); }
    const Var<T>& var() const { return var_; }
    const Tensor<T>& value() const { return var_.node()->value; }
    Tensor<T>& mutable_value() { return var_.node()->value; }
    Tensor<T>& grad() { return var_.node()->grad_buffer(); }
    bool has_grad() const { return !var_.node()->grad.empty(); }
    void zero_grad() {
        if (!var_.node()->grad.empty()) var_.node()->grad.fill(T(0));
    }
    bool trainable() const { return var_.node()->requires_grad; }
    void set_trainable(bool on) { var_.node()->requires_grad = on; }

private:
    Var<T> var_;
};

template <typename T>
struct NamedParam {
    std::string name;
    Parameter<T>* param;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
void set_trainable(const ParamList<T>& params, bool on) {
    for (const auto& p : params) p.param->set_trainable(on);
}

template <typename T>
void zero_grad(const ParamList<T>& params) {
    for (const auto& p : params) p.param->zero_grad();
}

// Freezes a parameter set for the guard's lifetime.
template <typename T>
class FreezeGuard {
public:
    explicit FreezeGuard(ParamList<T> params) : params_(std::move(params)) {
        set_trainable(params_, false);
    }
    ~FreezeGuard() { set_trainable(params_, true); }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    ParamList<T> params_;
};

}  // namespace tailor

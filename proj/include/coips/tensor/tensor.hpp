#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coips/errors.hpp"

namespace coips::tensor {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <class T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty means "no gradient yet"
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }

    std::vector<T>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        return grad;
    }
};

/// Dense row-major tensor handle. Copies share the underlying node (and so
/// the autodiff graph); use clone() for an independent copy.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<Node<T>>()) {
        validate_shape(shape);
        node_->data.assign(numel_of(shape), fill);
        node_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
        validate_shape(shape);
        if (values.size() != numel_of(shape))
            throw DimensionError("tensor data length " + std::to_string(values.size()) +
                                 " does not match shape " + tensor::to_string(shape));
        node_->shape = std::move(shape);
        node_->data = std::move(values);
    }

    static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    bool defined() const { return static_cast<bool>(node_); }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<T> data() { return node_->data; }
    std::span<const T> data() const { return node_->data; }
    std::vector<T>& values() { return node_->data; }
    const std::vector<T>& values() const { return node_->data; }

    bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
    std::span<T> grad() { return node_->grad; }
    std::span<const T> grad() const { return node_->grad; }
    std::vector<T>& grad_buffer() { return node_->ensure_grad(); }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool flag = true) {
        node_->requires_grad = flag;
        return *this;
    }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    T item() const {
        if (numel() != 1) throw ContractError("item() on tensor of shape " + tensor::to_string(shape()));
        return node_->data[0];
    }

    T& operator[](std::size_t i) { return node_->data[i]; }
    const T& operator[](std::size_t i) const { return node_->data[i]; }

    /// Independent copy of the values, detached from any graph.
    Tensor clone() const { return Tensor(node_->shape, node_->data); }

    /// Shares nothing with the graph; same values.
    Tensor detach() const { return clone(); }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(node_->data.begin(), node_->data.end());
        return Tensor<U>(node_->shape, std::move(out));
    }

    const std::shared_ptr<Node<T>>& node() const { return node_; }

private:
    static void validate_shape(const Shape& shape) {
        for (auto d : shape)
            if (d == 0) throw DimensionError("tensor dimensions must be positive: " + tensor::to_string(shape));
    }

    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
    for (const T& x : v)
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
}

/// Builds an op result. The backward closure is attached only when grad mode
/// is on and at least one input needs a gradient.
template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward) {
    check_finite(data, op);
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parents) needs = needs || (p && p->requires_grad);
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

}  // namespace detail

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
/// interior gradients are recomputed each time.
template <class T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward() requires a scalar loss, got shape " +
                            (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    using NodePtr = std::shared_ptr<Node<T>>;
    std::vector<NodePtr> order;
    std::unordered_map<Node<T>*, int> state;  // 1 = on stack, 2 = done
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    state[loss.node().get()] = 1;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodePtr parent = node->parents[next++];
            if (!parent || !parent->requires_grad) continue;
            auto it = state.find(parent.get());
            if (it == state.end()) {
                state[parent.get()] = 1;
                stack.emplace_back(parent, 0);
            } else if (it->second == 1) {
                throw InternalError("cycle detected in autodiff graph");
            }
        } else {
            state[node.get()] = 2;
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (auto& node : order)
        if (!node->is_leaf()) node->grad.assign(node->data.size(), T(0));
    auto& root = loss.node();
    if (!root->requires_grad) return;
    root->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
}

}  // namespace coips::tensor

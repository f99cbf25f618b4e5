// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hlm/common.hpp"
#include "hlm/rng.hpp"

namespace hlm {

// Dense tensor node on the reverse-mode tape. Values are immutable once an op
// has produced them; grads accumulate across backward() calls until zeroed.
template <typename S>
struct Node {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // sized lazily on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<S>>> parents;
    std::function<void(Node<S>&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), S(0));
    }
};

template <typename S>
using NodePtr = std::shared_ptr<Node<S>>;

// Graph construction switch. With grads disabled, ops keep no parents and no
// closures, so intermediate buffers free as soon as they go out of scope.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Shared handle to a node. Copies alias the same storage.
template <typename S>
class Tensor {
  public:
    using Scalar = S;

    Tensor() = default;
    explicit Tensor(NodePtr<S> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto n = std::make_shared<Node<S>>();
        int64_t count = numel_of(shape);
        n->shape = std::move(shape);
        n->value.assign(static_cast<size_t>(count), S(0));
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor full(Shape shape, S v, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (auto& x : t.value()) x = v;
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
        if (numel_of(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("from_data: shape " + shape_str(shape) + " does not match buffer of " +
                             std::to_string(data.size()) + " elements");
        auto n = std::make_shared<Node<S>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor scalar(S v) { return from_data({1}, {v}); }

    static Tensor randn(Shape shape, Rng& rng, S stddev, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (auto& x : t.value()) x = static_cast<S>(rng.truncated_normal(stddev));
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

    std::vector<S>& value() { return node_->value; }
    const std::vector<S>& value() const { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<S>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<S>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), S(0));
    }

    S item() const {
        if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
        return node_->value[0];
    }

    NodePtr<S> node() const { return node_; }

  private:
    NodePtr<S> node_;
};

// Builds an op result node. The backward closure is dropped entirely when no
// parent needs gradients (or grad mode is off), which also releases the
// captured parent handles.
template <typename S>
Tensor<S> make_op(Shape shape, std::vector<S> value, std::initializer_list<Tensor<S>> parents,
                  std::function<void(Node<S>&)> backward_fn) {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    if (grad_mode()) {
        for (const auto& p : parents)
            if (p.defined() && p.requires_grad()) rg = true;
    }
    n->requires_grad = rg;
    if (rg) {
        for (const auto& p : parents)
            if (p.defined()) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor<S>(std::move(n));
}

// Reverse-mode sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and walks
// the tape in reverse topological order. Leaf grads accumulate across calls
// (repeated backward without zeroing sums contributions); interior op-output
// grads are scratch space and reset at the start of every sweep.
template <typename S>
void backward(const Tensor<S>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ShapeError("backward: loss must be a scalar, got shape " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    if (!loss.requires_grad()) return;

    std::vector<Node<S>*> order;
    std::unordered_set<Node<S>*> seen;
    struct Frame {
        Node<S>* n;
        size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node<S>* p = f.n->parents[f.next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    for (Node<S>* n : order)
        if (n->backward_fn && !n->grad.empty()) n->grad.assign(n->value.size(), S(0));

    loss.node()->ensure_grad();
    loss.node()->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<S>* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// Integer id array (token ids, labels, gather indices). Not differentiated.
struct IntArray {
    Shape shape;
    std::vector<int32_t> data;

    IntArray() = default;
    IntArray(Shape s, std::vector<int32_t> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("IntArray: shape " + shape_str(shape) + " does not match buffer of " +
                             std::to_string(data.size()) + " elements");
    }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

}  // namespace hlm

#pragma once

#include "opengan/nn/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace opengan::nn {

template <typename Scalar>
struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Tensor<Scalar>&)> backward;

    Tensor<Scalar>& grad_buffer()
    {
        if (grad.size() != value.size())
            grad = Tensor<Scalar>(value.shape());
        return grad;
    }
};

/// Handle to a node in the dynamic computation graph. Copies share the node.
template <typename Scalar>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<Scalar> value, bool requires_grad = false)
        : node_(std::make_shared<Node<Scalar>>())
    {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<Scalar>& value() const { return node_->value; }
    Tensor<Scalar>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    Index dim(int axis) const { return node_->value.dim(axis); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    /// Gradient accumulated by backward(); zeros when nothing flowed here.
    const Tensor<Scalar>& grad() const { return node_->grad_buffer(); }
    Tensor<Scalar>& grad_buffer() const { return node_->grad_buffer(); }
    void zero_grad() const
    {
        if (!node_->grad.empty())
            node_->grad.array().setZero();
    }

    Node<Scalar>* node() const { return node_.get(); }
    const std::shared_ptr<Node<Scalar>>& shared() const { return node_; }

    Var detach() const { return Var(node_->value, false); }

private:
    std::shared_ptr<Node<Scalar>> node_;
};

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Creates an op result. The backward closure receives the output gradient
/// and accumulates into whichever inputs require gradients.
template <typename Scalar, typename Backward>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs, Backward&& backward)
{
    Var<Scalar> out(std::move(value), false);
    if (!grad_enabled())
        return out;
    bool any = false;
    for (const auto& in : inputs)
        any = any || in.requires_grad();
    if (!any)
        return out;
    auto* node = out.node();
    node->requires_grad = true;
    for (auto& in : inputs)
        if (in.requires_grad())
            node->parents.push_back(in.shared());
    node->backward = std::forward<Backward>(backward);
    return out;
}

/// Reverse sweep from a scalar root (seed 1) or with an explicit seed gradient.
template <typename Scalar>
void backward(const Var<Scalar>& root);
template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>& seed);

}  // namespace opengan::nn

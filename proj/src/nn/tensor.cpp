#include "opengan/nn/autograd.hpp"

#include <cstdio>
#include <unordered_set>

namespace opengan::nn {

Index numel(const Shape& shape)
{
    Index n = 1;
    for (Index d : shape)
        n *= d;
    return n;
}

std::string to_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::uint64_t fnv1a(const void* bytes, std::size_t count, std::uint64_t seed)
{
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < count; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Scalar>
void backward(const Var<Scalar>& root, const Tensor<Scalar>& seed)
{
    if (!root.requires_grad())
        throw Error("backward called on a value that does not require gradients");
    if (seed.size() != root.value().size())
        throw Error("backward seed shape mismatch");

    // Iterative post-order DFS gives a topological order.
    std::vector<Node<Scalar>*> order;
    std::unordered_set<Node<Scalar>*> visited;
    std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<Scalar>* parent = node->parents[next++].get();
            if (visited.insert(parent).second)
                stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer().array() += seed.array();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<Scalar>* node = *it;
        if (node->backward && !node->grad.empty())
            node->backward(node->grad);
    }
}

template <typename Scalar>
void backward(const Var<Scalar>& root)
{
    if (root.value().size() != 1)
        throw Error("backward without a seed requires a scalar root, got " +
                    to_string(root.shape()));
    backward(root, Tensor<Scalar>(root.shape(), Scalar(1)));
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);
template void backward<float>(const Var<float>&, const Tensor<float>&);
template void backward<double>(const Var<double>&, const Tensor<double>&);

}  // namespace opengan::nn

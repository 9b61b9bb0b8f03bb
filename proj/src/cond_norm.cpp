#include "opengan/cond_norm.hpp"

#include <algorithm>

namespace opengan {

using nn::Index;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& table, const std::vector<Index>& rows)
{
    const Index d = table.dim(1), n = static_cast<Index>(rows.size());
    Tensor<Scalar> out(Shape{n, d});
    for (Index i = 0; i < n; ++i)
        out.matrix(n, d).row(i) = table.value().matrix(table.dim(0), d).row(rows[i]);
    return nn::make_result<Scalar>(std::move(out), {table}, [table, rows, n, d](const Tensor<Scalar>& g) {
        auto dt = table.grad_buffer().matrix(table.dim(0), d);
        for (Index i = 0; i < n; ++i)
            dt.row(rows[i]) += g.matrix(n, d).row(i);
    });
}

}  // namespace

template <typename Scalar>
CondNorm<Scalar>::CondNorm(Index channels, Index embedding_dim, Index hidden_dim, NormMode mode_,
                           nn::Rng& rng, Scalar eps_)
    : hidden(embedding_dim, hidden_dim, false, rng),
      project(hidden_dim, 2 * channels, false, rng, Scalar(0.1)),
      mode(mode_),
      eps(eps_),
      channels_(channels)
{
    // gamma starts near 1, alpha near 0.
    project.bias.mutable_value().array().head(channels).setOnes();
    running.mean = nn::Buffer<Scalar>::Zero(channels);
    running.var = nn::Buffer<Scalar>::Ones(channels);
}

template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> CondNorm<Scalar>::scale_bias(const Var<Scalar>& embedding)
{
    if (embedding.value().rank() != 2 || embedding.dim(1) != embedding_dim())
        throw Error("conditional norm: embedding must be [N," + std::to_string(embedding_dim()) +
                    "], got " + nn::to_string(embedding.shape()));
    const Index n = embedding.dim(0), c = channels_;
    auto h = nn::relu(hidden.forward(embedding, false));
    auto p = project.forward(h, false);  // [n, 2c]

    Tensor<Scalar> g(Shape{n, c}), a(Shape{n, c});
    g.matrix(n, c) = p.value().matrix(n, 2 * c).leftCols(c);
    a.matrix(n, c) = p.value().matrix(n, 2 * c).rightCols(c);
    auto split = [p, n, c](bool left) {
        return [p, n, c, left](const Tensor<Scalar>& grad) {
            auto dp = p.grad_buffer().matrix(n, 2 * c);
            if (left)
                dp.leftCols(c) += grad.matrix(n, c);
            else
                dp.rightCols(c) += grad.matrix(n, c);
        };
    };
    auto gamma = nn::make_result<Scalar>(std::move(g), {p}, split(true));
    auto alpha = nn::make_result<Scalar>(std::move(a), {p}, split(false));
    return {gamma, alpha};
}

template <typename Scalar>
Var<Scalar> CondNorm<Scalar>::forward(const Var<Scalar>& x, const Var<Scalar>& embedding, bool training)
{
    if (x.value().rank() != 4 || x.dim(1) != channels_)
        throw Error("conditional norm: expected " + std::to_string(channels_) +
                    " channels, got " + nn::to_string(x.shape()));
    const Index n = x.dim(0);
    if (embedding.value().rank() != 2 || (embedding.dim(0) != n && embedding.dim(0) != 1))
        throw Error("conditional norm: need one embedding per item or one shared, got " +
                    nn::to_string(embedding.shape()) + " for batch " + std::to_string(n));
    auto [gamma, alpha] = scale_bias(embedding);
    if (embedding.dim(0) != n) {
        gamma = nn::broadcast_rows(gamma, n);
        alpha = nn::broadcast_rows(alpha, n);
    }
    auto xhat = nn::standardize(x, mode, eps, training, &running);
    return nn::channel_affine(xhat, gamma, alpha);
}

template <typename Scalar>
void CondNorm<Scalar>::collect(nn::ParamRegistry<Scalar>& reg, const std::string& prefix)
{
    hidden.collect(reg, prefix + ".fc1");
    project.collect(reg, prefix + ".fc2");
    if (mode == NormMode::batch) {
        reg.buffer(prefix + ".running_mean", running.mean);
        reg.buffer(prefix + ".running_var", running.var);
    }
}

template <typename Scalar>
ClassCondNorm<Scalar>::ClassCondNorm(std::vector<int> class_ids, Index channels, Index embedding_dim,
                                     NormMode mode, nn::Rng& rng, Scalar eps)
    : embeddings(rng.normal_tensor<Scalar>(Shape{static_cast<Index>(class_ids.size()), embedding_dim}), true),
      norm(channels, embedding_dim, embedding_dim, mode, rng, eps),
      class_ids_(std::move(class_ids))
{
    if (class_ids_.empty())
        throw Error("class conditional norm needs at least one class");
}

template <typename Scalar>
bool ClassCondNorm<Scalar>::knows(int class_id) const
{
    return std::find(class_ids_.begin(), class_ids_.end(), class_id) != class_ids_.end();
}

template <typename Scalar>
Var<Scalar> ClassCondNorm<Scalar>::lookup(const std::vector<int>& class_ids) const
{
    std::vector<Index> rows;
    rows.reserve(class_ids.size());
    for (int id : class_ids) {
        auto it = std::find(class_ids_.begin(), class_ids_.end(), id);
        if (it == class_ids_.end())
            throw Error("class conditional norm: class " + std::to_string(id) +
                        " was not seen in training; only training classes can be generated");
        rows.push_back(static_cast<Index>(it - class_ids_.begin()));
    }
    return gather_rows(embeddings, rows);
}

template <typename Scalar>
Var<Scalar> ClassCondNorm<Scalar>::forward(const Var<Scalar>& x, const std::vector<int>& class_ids,
                                           bool training)
{
    return norm.forward(x, lookup(class_ids), training);
}

template <typename Scalar>
Var<Scalar> ClassCondNorm<Scalar>::forward(const Var<Scalar>& x, int class_id, bool training)
{
    return norm.forward(x, lookup({class_id}), training);
}

template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> ClassCondNorm<Scalar>::scale_bias(int class_id)
{
    return norm.scale_bias(lookup({class_id}));
}

template <typename Scalar>
void ClassCondNorm<Scalar>::collect(nn::ParamRegistry<Scalar>& reg, const std::string& prefix)
{
    reg.param(prefix + ".class_embeddings", embeddings);
    norm.collect(reg, prefix);
}

template class CondNorm<float>;
template class CondNorm<double>;
template class ClassCondNorm<float>;
template class ClassCondNorm<double>;

}  // namespace opengan

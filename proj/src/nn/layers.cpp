#include "opengan/nn/layers.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace opengan::nn {

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream)
{
    std::uint64_t h = fnv1a(stream.data(), stream.size(), seed ^ 0x9e3779b97f4a7c15ULL);
    // splitmix64 finaliser
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

template <typename Scalar>
std::vector<Var<Scalar>> ParamRegistry<Scalar>::vars() const
{
    std::vector<Var<Scalar>> out;
    out.reserve(params_.size());
    for (const auto& p : params_)
        out.push_back(p.var);
    return out;
}

template <typename Scalar>
Index ParamRegistry<Scalar>::parameter_count() const
{
    Index n = 0;
    for (const auto& p : params_)
        n += p.var.value().size();
    return n;
}

template <typename Scalar>
void ParamRegistry<Scalar>::set_trainable(bool trainable) const
{
    for (const auto& p : params_)
        p.var.node()->requires_grad = trainable;
}

template <typename Scalar>
void ParamRegistry<Scalar>::zero_grad() const
{
    for (const auto& p : params_)
        p.var.zero_grad();
}

template <typename Scalar>
std::uint64_t ParamRegistry<Scalar>::hash() const
{
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params_)
        h = fnv1a(p.var.value().data(), sizeof(Scalar) * p.var.value().size(), h);
    for (const auto& b : buffers_)
        h = fnv1a(b.data->data(), sizeof(Scalar) * b.data->size(), h);
    return h;
}

template <typename Scalar>
Tensor<Scalar> orthogonal_init(Shape shape, Rng& rng, Scalar gain)
{
    const Index rows = shape.at(0);
    const Index cols = numel(shape) / rows;
    using M = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
    const bool tall = rows >= cols;
    M a(tall ? rows : cols, tall ? cols : rows);
    for (Index i = 0; i < a.size(); ++i)
        a.data()[i] = rng.normal();
    Eigen::HouseholderQR<M> qr(a);
    M q = qr.householderQ() * M::Identity(a.rows(), a.cols());
    const M r = qr.matrixQR().topRows(a.cols()).template triangularView<Eigen::Upper>();
    for (Index j = 0; j < q.cols(); ++j)
        if (r(j, j) < 0)
            q.col(j) = -q.col(j);
    const M w = tall ? q : M(q.transpose());
    Tensor<Scalar> out(std::move(shape));
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            out[i * cols + j] = static_cast<Scalar>(gain * w(i, j));
    return out;
}

namespace {

template <typename Scalar>
void init_spectral(SpectralState<Scalar>& state, Index rows, Index cols, Rng& rng)
{
    state.u = Buffer<Scalar>(rows);
    state.v = Buffer<Scalar>(cols);
    for (Index i = 0; i < rows; ++i)
        state.u[i] = static_cast<Scalar>(rng.normal());
    state.u /= std::max(Scalar(1e-12), static_cast<Scalar>(state.u.matrix().norm()));
    state.v.setZero();
}

}  // namespace

template <typename Scalar>
Var<Scalar> spectral_weight(const Var<Scalar>& weight, SpectralState<Scalar>& state, bool training)
{
    const Index rows = weight.dim(0), cols = weight.value().size() / rows;
    auto W = weight.value().matrix(rows, cols);
    if (training || state.v.matrix().squaredNorm() == Scalar(0)) {
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v = W.transpose() * state.u.matrix();
        const Scalar vn = v.norm();
        if (vn > Scalar(0))
            v /= vn;
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> u = W * v;
        const Scalar un = u.norm();
        if (un > Scalar(0))
            u /= un;
        if (vn > Scalar(0) && un > Scalar(0)) {
            state.u = u.array();
            state.v = v.array();
        }
    }
    return spectral_scale<Scalar>(weight, state.u.matrix(), state.v.matrix());
}

template <typename Scalar>
Linear<Scalar>::Linear(Index in, Index out, bool spectral_, Rng& rng, Scalar gain, bool with_bias)
    : weight(orthogonal_init<Scalar>(Shape{out, in}, rng, gain), true), spectral(spectral_)
{
    if (with_bias)
        bias = Var<Scalar>(Tensor<Scalar>(Shape{out}), true);
    if (spectral)
        init_spectral(sn, out, in, rng);
}

template <typename Scalar>
Var<Scalar> Linear<Scalar>::forward(const Var<Scalar>& x, bool training)
{
    const Var<Scalar> w = spectral ? spectral_weight(weight, sn, training) : weight;
    return linear(x, w, bias);
}

template <typename Scalar>
void Linear<Scalar>::collect(ParamRegistry<Scalar>& reg, const std::string& prefix)
{
    reg.param(prefix + ".weight", weight);
    if (bias.defined())
        reg.param(prefix + ".bias", bias);
    if (spectral) {
        reg.buffer(prefix + ".sn_u", sn.u);
        reg.buffer(prefix + ".sn_v", sn.v);
    }
}

template <typename Scalar>
Conv2d<Scalar>::Conv2d(Index in, Index out, Index kernel, bool spectral_, Rng& rng, Scalar gain)
    : weight(orthogonal_init<Scalar>(Shape{out, in, kernel, kernel}, rng, gain), true),
      bias(Tensor<Scalar>(Shape{out}), true),
      padding(kernel / 2),
      spectral(spectral_)
{
    if (spectral)
        init_spectral(sn, out, in * kernel * kernel, rng);
}

template <typename Scalar>
Var<Scalar> Conv2d<Scalar>::forward(const Var<Scalar>& x, bool training)
{
    if (x.value().rank() != 4 || x.dim(1) != in_channels())
        throw Error("conv: expected " + std::to_string(in_channels()) + " input channels, got " +
                    to_string(x.shape()));
    const Var<Scalar> w = spectral ? spectral_weight(weight, sn, training) : weight;
    return conv2d(x, w, bias, padding);
}

template <typename Scalar>
void Conv2d<Scalar>::collect(ParamRegistry<Scalar>& reg, const std::string& prefix)
{
    reg.param(prefix + ".weight", weight);
    reg.param(prefix + ".bias", bias);
    if (spectral) {
        reg.buffer(prefix + ".sn_u", sn.u);
        reg.buffer(prefix + ".sn_v", sn.v);
    }
}

template <typename Scalar>
Var<Scalar> broadcast_rows(const Var<Scalar>& row, Index n)
{
    const Index c = row.value().size();
    Tensor<Scalar> out(Shape{n, c});
    out.matrix(n, c).rowwise() = row.value().matrix(1, c).row(0);
    return make_result<Scalar>(std::move(out), {row}, [row, n, c](const Tensor<Scalar>& g) {
        row.grad_buffer().matrix(1, c).row(0) += g.matrix(n, c).colwise().sum();
    });
}

template <typename Scalar>
Norm2d<Scalar>::Norm2d(Index channels, NormMode mode_, Scalar eps_)
    : gamma(Tensor<Scalar>(Shape{channels}, Scalar(1)), true),
      beta(Tensor<Scalar>(Shape{channels}), true),
      mode(mode_),
      eps(eps_)
{
    running.mean = Buffer<Scalar>::Zero(channels);
    running.var = Buffer<Scalar>::Ones(channels);
}

template <typename Scalar>
Var<Scalar> Norm2d<Scalar>::forward(const Var<Scalar>& x, bool training)
{
    auto xhat = standardize(x, mode, eps, training, &running);
    const Index n = x.dim(0);
    return channel_affine(xhat, broadcast_rows(gamma, n), broadcast_rows(beta, n));
}

template <typename Scalar>
void Norm2d<Scalar>::collect(ParamRegistry<Scalar>& reg, const std::string& prefix)
{
    reg.param(prefix + ".gamma", gamma);
    reg.param(prefix + ".beta", beta);
    if (mode == NormMode::batch) {
        reg.buffer(prefix + ".running_mean", running.mean);
        reg.buffer(prefix + ".running_var", running.var);
    }
}

template <typename Scalar>
SelfAttention<Scalar>::SelfAttention(Index channels, Rng& rng)
    : query(channels, std::max<Index>(1, channels / 8), 1, true, rng),
      key(channels, std::max<Index>(1, channels / 8), 1, true, rng),
      value(channels, std::max<Index>(1, channels / 2), 1, true, rng),
      output(std::max<Index>(1, channels / 2), channels, 1, true, rng),
      gate(Tensor<Scalar>(Shape{1}), true)
{
}

template <typename Scalar>
Var<Scalar> SelfAttention<Scalar>::forward(const Var<Scalar>& x, bool training)
{
    const Index N = x.dim(0), H = x.dim(2), W = x.dim(3), L = H * W;
    auto q = reshape(query.forward(x, training), Shape{N, query.out_channels(), L});
    auto k = reshape(key.forward(x, training), Shape{N, key.out_channels(), L});
    auto v = reshape(value.forward(x, training), Shape{N, value.out_channels(), L});
    auto o = reshape(attention(q, k, v), Shape{N, value.out_channels(), H, W});
    return add(x, mul_gate(output.forward(o, training), gate));
}

template <typename Scalar>
Tensor<Scalar> SelfAttention<Scalar>::weights(const Var<Scalar>& x)
{
    NoGradGuard guard;
    const Index N = x.dim(0), L = x.dim(2) * x.dim(3);
    auto q = query.forward(x, false).value().reshaped(Shape{N, query.out_channels(), L});
    auto k = key.forward(x, false).value().reshaped(Shape{N, key.out_channels(), L});
    return attention_weights(q, k);
}

template <typename Scalar>
void SelfAttention<Scalar>::collect(ParamRegistry<Scalar>& reg, const std::string& prefix)
{
    query.collect(reg, prefix + ".query");
    key.collect(reg, prefix + ".key");
    value.collect(reg, prefix + ".value");
    output.collect(reg, prefix + ".output");
    reg.param(prefix + ".gate", gate);
}

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<Var<Scalar>> params, Config cfg)
    : params_(std::move(params)), cfg_(cfg)
{
    for (const auto& p : params_) {
        m_.push_back(Buffer<Scalar>::Zero(p.value().size()));
        v_.push_back(Buffer<Scalar>::Zero(p.value().size()));
    }
}

template <typename Scalar>
void Adam<Scalar>::zero_grad()
{
    for (const auto& p : params_)
        p.zero_grad();
}

template <typename Scalar>
void Adam<Scalar>::step()
{
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
    const auto step = static_cast<Scalar>(cfg_.learning_rate / bc1);
    const auto c2 = static_cast<Scalar>(1.0 / std::sqrt(bc2));
    const auto eps = static_cast<Scalar>(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto* node = params_[i].node();
        if (!node->requires_grad || node->grad.empty())
            continue;
        const auto& g = node->grad.array();
        m_[i] = b1 * m_[i] + (1 - b1) * g;
        v_[i] = b2 * v_[i] + (1 - b2) * g.square();
        node->value.array() -= step * m_[i] / (v_[i].sqrt() * c2 + eps);
    }
}

#define OPENGAN_INSTANTIATE_LAYERS(S)                                                     \
    template class ParamRegistry<S>;                                                      \
    template Tensor<S> orthogonal_init<S>(Shape, Rng&, S);                                \
    template Var<S> spectral_weight<S>(const Var<S>&, SpectralState<S>&, bool);           \
    template Var<S> broadcast_rows<S>(const Var<S>&, Index);                              \
    template class Linear<S>;                                                             \
    template class Conv2d<S>;                                                             \
    template class Norm2d<S>;                                                             \
    template class SelfAttention<S>;                                                      \
    template class Adam<S>;

OPENGAN_INSTANTIATE_LAYERS(float)
OPENGAN_INSTANTIATE_LAYERS(double)

}  // namespace opengan::nn

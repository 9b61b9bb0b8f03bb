#pragma once

#include "opengan/nn/ops.hpp"
#include "opengan/nn/random.hpp"

#include <string>
#include <vector>

namespace opengan::nn {

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Flat, ordered inventory of a model's learnable parameters and state buffers.
template <typename Scalar>
class ParamRegistry {
public:
    struct Param {
        std::string name;
        Var<Scalar> var;
    };
    struct State {
        std::string name;
        Buffer<Scalar>* data;
    };

    void param(std::string name, const Var<Scalar>& var) { params_.push_back({std::move(name), var}); }
    void buffer(std::string name, Buffer<Scalar>& data) { buffers_.push_back({std::move(name), &data}); }

    const std::vector<Param>& params() const { return params_; }
    const std::vector<State>& buffers() const { return buffers_; }
    std::vector<Var<Scalar>> vars() const;
    Index parameter_count() const;

    void set_trainable(bool trainable) const;
    void zero_grad() const;
    /// Hash over every parameter value and buffer, in registration order.
    std::uint64_t hash() const;

private:
    std::vector<Param> params_;
    std::vector<State> buffers_;
};

/// Orthogonal matrix [rows, cols] scaled by gain.
template <typename Scalar>
Tensor<Scalar> orthogonal_init(Shape shape, Rng& rng, Scalar gain = Scalar(1));

/// Power-iteration state for one spectrally normalised weight.
template <typename Scalar>
struct SpectralState {
    Buffer<Scalar> u;
    Buffer<Scalar> v;
};

/// Returns weight / sigma_max-estimate. In training mode one power iteration
/// refines (u, v) first; otherwise the stored vectors are used as-is.
template <typename Scalar>
Var<Scalar> spectral_weight(const Var<Scalar>& weight, SpectralState<Scalar>& state, bool training);

template <typename Scalar>
class Linear {
public:
    Linear() = default;
    Linear(Index in, Index out, bool spectral, Rng& rng, Scalar gain = Scalar(1), bool bias = true);

    Var<Scalar> forward(const Var<Scalar>& x, bool training);
    void collect(ParamRegistry<Scalar>& reg, const std::string& prefix);

    Index in_features() const { return weight.dim(1); }
    Index out_features() const { return weight.dim(0); }

    Var<Scalar> weight;
    Var<Scalar> bias;
    bool spectral = false;
    SpectralState<Scalar> sn;
};

template <typename Scalar>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(Index in, Index out, Index kernel, bool spectral, Rng& rng, Scalar gain = Scalar(1));

    Var<Scalar> forward(const Var<Scalar>& x, bool training);
    void collect(ParamRegistry<Scalar>& reg, const std::string& prefix);

    Index in_channels() const { return weight.dim(1); }
    Index out_channels() const { return weight.dim(0); }

    Var<Scalar> weight;
    Var<Scalar> bias;
    Index padding = 0;
    bool spectral = false;
    SpectralState<Scalar> sn;
};

/// Unconditional normalisation with a learned per-channel affine.
template <typename Scalar>
class Norm2d {
public:
    Norm2d() = default;
    Norm2d(Index channels, NormMode mode, Scalar eps = Scalar(1e-5));

    Var<Scalar> forward(const Var<Scalar>& x, bool training);
    void collect(ParamRegistry<Scalar>& reg, const std::string& prefix);

    Var<Scalar> gamma;
    Var<Scalar> beta;
    NormMode mode = NormMode::batch;
    Scalar eps = Scalar(1e-5);
    RunningStats<Scalar> running;
};

/// Non-local block: x + gate * W_o(attention(W_q x, W_k x, W_v x)). Gate starts at 0.
template <typename Scalar>
class SelfAttention {
public:
    SelfAttention() = default;
    SelfAttention(Index channels, Rng& rng);

    Var<Scalar> forward(const Var<Scalar>& x, bool training);
    /// Attention map [N, L, L] for the given input, for inspection.
    Tensor<Scalar> weights(const Var<Scalar>& x);
    void collect(ParamRegistry<Scalar>& reg, const std::string& prefix);

    Conv2d<Scalar> query, key, value, output;
    Var<Scalar> gate;
};

/// [C] or [1,C] -> [N,C], summing gradients back over rows.
template <typename Scalar>
Var<Scalar> broadcast_rows(const Var<Scalar>& row, Index n);

/// Adam with bias correction.
template <typename Scalar>
class Adam {
public:
    struct Config {
        double learning_rate = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() = default;
    Adam(std::vector<Var<Scalar>> params, Config cfg);

    void zero_grad();
    void step();
    long steps() const { return t_; }
    const Config& config() const { return cfg_; }

private:
    std::vector<Var<Scalar>> params_;
    std::vector<Buffer<Scalar>> m_, v_;
    Config cfg_;
    long t_ = 0;
};

}  // namespace opengan::nn

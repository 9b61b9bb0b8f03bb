#pragma once

#include "opengan/cond_norm.hpp"

#include <optional>
#include <string>
#include <vector>

namespace opengan {

/// Shared generator/discriminator settings. The block count fixes the
/// resolution: resolution = 4 * 2^blocks.
struct NetworkConfig {
    int latent_dim = 128;
    int base_channels = 32;
    int resolution = 32;
    int residual_blocks = 3;
    int embedding_dim = 512;
    /// Block index (0-based) followed by self-attention; -1 picks the
    /// position matching the reference layout (quarter resolution).
    int generator_attention = -1;
    int discriminator_attention = -1;
    NormMode norm_mode = NormMode::batch;
    double epsilon = 1e-5;

    void validate() const;
    /// Channel multipliers: generator stem then each up block's output.
    std::vector<int> generator_multipliers() const;
    /// Discriminator stem conv output then each down block's output.
    std::vector<int> discriminator_multipliers() const;
    int generator_attention_block() const;
    int discriminator_attention_block() const;
};

template <typename Scalar>
class ResBlockUp {
public:
    ResBlockUp() = default;
    ResBlockUp(nn::Index in, nn::Index out, nn::Index embedding_dim, NormMode mode, nn::Rng& rng,
               Scalar eps = Scalar(1e-5));

    /// Spatial size doubles (nearest neighbour); both branches are conditioned on f.
    nn::Var<Scalar> forward(const nn::Var<Scalar>& x, const nn::Var<Scalar>& f, bool training);
    void collect(nn::ParamRegistry<Scalar>& reg, const std::string& prefix);

    CondNorm<Scalar> norm1, norm2;
    nn::Conv2d<Scalar> conv1, conv2, skip;
};

template <typename Scalar>
class ResBlockDown {
public:
    ResBlockDown() = default;
    ResBlockDown(nn::Index in, nn::Index out, bool spectral, nn::Rng& rng);

    /// Spatial size halves (2x2 average pooling) on both branches.
    nn::Var<Scalar> forward(const nn::Var<Scalar>& x, bool training);
    void collect(nn::ParamRegistry<Scalar>& reg, const std::string& prefix);

    nn::Conv2d<Scalar> conv1, conv2, skip;
};

/// G(z, f): affine map of z to a 4x4 grid, conditioned up-sampling blocks,
/// one self-attention block, normalisation, 3x3 conv to RGB, tanh.
template <typename Scalar>
class Generator {
public:
    Generator() = default;
    Generator(const NetworkConfig& cfg, nn::Rng& rng);

    nn::Var<Scalar> forward(const nn::Var<Scalar>& z, const nn::Var<Scalar>& f, bool training);
    nn::ParamRegistry<Scalar> registry();
    std::vector<std::string> manifest();
    const NetworkConfig& config() const { return cfg_; }

    nn::Linear<Scalar> stem;
    std::vector<ResBlockUp<Scalar>> blocks;
    nn::SelfAttention<Scalar> attention;
    nn::Norm2d<Scalar> out_norm;
    nn::Conv2d<Scalar> to_rgb;

private:
    NetworkConfig cfg_;
};

/// D(x, f): 3x3 conv, down-sampling blocks with one self-attention block,
/// then a single feature-conditional normalisation, ReLU and a linear head.
template <typename Scalar>
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(const NetworkConfig& cfg, nn::Rng& rng);

    /// Returns [N,1] scores.
    nn::Var<Scalar> forward(const nn::Var<Scalar>& x, const nn::Var<Scalar>& f, bool training);
    nn::ParamRegistry<Scalar> registry();
    std::vector<std::string> manifest();
    const NetworkConfig& config() const { return cfg_; }

    nn::Conv2d<Scalar> stem;
    std::vector<ResBlockDown<Scalar>> blocks;
    nn::SelfAttention<Scalar> attention;
    CondNorm<Scalar> head_norm;
    nn::Linear<Scalar> head;

private:
    NetworkConfig cfg_;
};

/// Residual convolutional encoder ending in global average pooling and a
/// linear map. Serves as the metric backbone and the augmentation classifier.
struct EncoderConfig {
    int resolution = 32;
    int base_channels = 16;
    int blocks = 3;
    int output_dim = 512;
};

template <typename Scalar>
class ConvEncoder {
public:
    ConvEncoder() = default;
    ConvEncoder(const EncoderConfig& cfg, nn::Rng& rng);

    nn::Var<Scalar> forward(const nn::Var<Scalar>& images, bool training);
    nn::ParamRegistry<Scalar> registry();
    std::vector<std::string> manifest();
    const EncoderConfig& config() const { return cfg_; }

    nn::Conv2d<Scalar> stem;
    std::vector<ResBlockDown<Scalar>> blocks;
    nn::Linear<Scalar> head;

private:
    EncoderConfig cfg_;
};

/// "name shape" lines for every parameter in registration order.
template <typename Scalar>
std::vector<std::string> parameter_manifest(const nn::ParamRegistry<Scalar>& reg);

}  // namespace opengan

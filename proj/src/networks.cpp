#include "opengan/networks.hpp"

#include <algorithm>

namespace opengan {

using nn::Index;
using nn::Shape;
using nn::Var;

void NetworkConfig::validate() const
{
    if (latent_dim < 1 || base_channels < 1 || embedding_dim < 1)
        throw Error("network config: latent_dim, base_channels and embedding_dim must be positive");
    if (residual_blocks < 1)
        throw Error("network config: residual_blocks must be >= 1");
    if (resolution != (4 << residual_blocks))
        throw Error("network config: resolution " + std::to_string(resolution) + " needs " +
                    "4*2^blocks; " + std::to_string(residual_blocks) + " blocks give " +
                    std::to_string(4 << residual_blocks));
    if (generator_attention >= residual_blocks || discriminator_attention >= residual_blocks)
        throw Error("network config: attention position beyond the last block");
    if (!(epsilon > 0))
        throw Error("network config: epsilon must be positive");
}

std::vector<int> NetworkConfig::generator_multipliers() const
{
    std::vector<int> full{16, 16, 8, 8, 4, 2, 1};
    const auto want = static_cast<std::size_t>(residual_blocks + 1);
    while (full.size() < want)
        full.insert(full.begin(), 16);
    return {full.end() - static_cast<long>(want), full.end()};
}

std::vector<int> NetworkConfig::discriminator_multipliers() const
{
    std::vector<int> full{1, 2, 4, 8, 8, 16, 16};
    const auto want = static_cast<std::size_t>(residual_blocks + 1);
    while (full.size() < want)
        full.push_back(16);
    return {full.begin(), full.begin() + static_cast<long>(want)};
}

int NetworkConfig::generator_attention_block() const
{
    return generator_attention >= 0 ? generator_attention : std::max(0, residual_blocks - 3);
}

int NetworkConfig::discriminator_attention_block() const
{
    return discriminator_attention >= 0 ? discriminator_attention : std::min(1, residual_blocks - 1);
}

template <typename Scalar>
ResBlockUp<Scalar>::ResBlockUp(Index in, Index out, Index embedding_dim, NormMode mode, nn::Rng& rng,
                               Scalar eps)
    : norm1(in, embedding_dim, embedding_dim, mode, rng, eps),
      norm2(out, embedding_dim, embedding_dim, mode, rng, eps),
      conv1(in, out, 3, true, rng),
      conv2(out, out, 3, true, rng),
      skip(in, out, 1, true, rng)
{
}

template <typename Scalar>
Var<Scalar> ResBlockUp<Scalar>::forward(const Var<Scalar>& x, const Var<Scalar>& f, bool training)
{
    auto h = nn::relu(norm1.forward(x, f, training));
    h = conv1.forward(nn::upsample_nearest2x(h), training);
    h = nn::relu(norm2.forward(h, f, training));
    h = conv2.forward(h, training);
    auto s = skip.forward(nn::upsample_nearest2x(x), training);
    return nn::add(h, s);
}

template <typename Scalar>
void ResBlockUp<Scalar>::collect(nn::ParamRegistry<Scalar>& reg, const std::string& prefix)
{
    norm1.collect(reg, prefix + ".cnorm1");
    conv1.collect(reg, prefix + ".conv1");
    norm2.collect(reg, prefix + ".cnorm2");
    conv2.collect(reg, prefix + ".conv2");
    skip.collect(reg, prefix + ".skip");
}

template <typename Scalar>
ResBlockDown<Scalar>::ResBlockDown(Index in, Index out, bool spectral, nn::Rng& rng)
    : conv1(in, out, 3, spectral, rng), conv2(out, out, 3, spectral, rng), skip(in, out, 1, spectral, rng)
{
}

template <typename Scalar>
Var<Scalar> ResBlockDown<Scalar>::forward(const Var<Scalar>& x, bool training)
{
    auto h = conv1.forward(nn::relu(x), training);
    h = conv2.forward(nn::relu(h), training);
    h = nn::avg_pool2x(h);
    auto s = nn::avg_pool2x(skip.forward(x, training));
    return nn::add(h, s);
}

template <typename Scalar>
void ResBlockDown<Scalar>::collect(nn::ParamRegistry<Scalar>& reg, const std::string& prefix)
{
    conv1.collect(reg, prefix + ".conv1");
    conv2.collect(reg, prefix + ".conv2");
    skip.collect(reg, prefix + ".skip");
}

template <typename Scalar>
Generator<Scalar>::Generator(const NetworkConfig& cfg, nn::Rng& rng) : cfg_(cfg)
{
    cfg_.validate();
    const auto mult = cfg_.generator_multipliers();
    const Index b = cfg_.base_channels;
    const Index c0 = mult[0] * b;
    const auto eps = static_cast<Scalar>(cfg_.epsilon);
    stem = nn::Linear<Scalar>(cfg_.latent_dim, c0 * 16, true, rng);
    for (int i = 0; i < cfg_.residual_blocks; ++i)
        blocks.emplace_back(mult[i] * b, mult[i + 1] * b, cfg_.embedding_dim, cfg_.norm_mode, rng, eps);
    attention = nn::SelfAttention<Scalar>(mult[cfg_.generator_attention_block() + 1] * b, rng);
    const Index last = mult.back() * b;
    out_norm = nn::Norm2d<Scalar>(last, cfg_.norm_mode, eps);
    to_rgb = nn::Conv2d<Scalar>(last, 3, 3, true, rng);
}

template <typename Scalar>
Var<Scalar> Generator<Scalar>::forward(const Var<Scalar>& z, const Var<Scalar>& f, bool training)
{
    if (z.value().rank() != 2 || z.dim(1) != cfg_.latent_dim)
        throw Error("generator: latent must be [N," + std::to_string(cfg_.latent_dim) + "], got " +
                    nn::to_string(z.shape()));
    const Index n = z.dim(0);
    const Index c0 = cfg_.generator_multipliers()[0] * cfg_.base_channels;
    auto h = nn::reshape(stem.forward(z, training), Shape{n, c0, 4, 4});
    const int attn = cfg_.generator_attention_block();
    for (int i = 0; i < static_cast<int>(blocks.size()); ++i) {
        h = blocks[static_cast<std::size_t>(i)].forward(h, f, training);
        if (i == attn)
            h = attention.forward(h, training);
    }
    h = nn::relu(out_norm.forward(h, training));
    return nn::tanh(to_rgb.forward(h, training));
}

template <typename Scalar>
nn::ParamRegistry<Scalar> Generator<Scalar>::registry()
{
    nn::ParamRegistry<Scalar> reg;
    stem.collect(reg, "G.linear");
    const int attn = cfg_.generator_attention_block();
    for (int i = 0; i < static_cast<int>(blocks.size()); ++i) {
        blocks[static_cast<std::size_t>(i)].collect(reg, "G.up" + std::to_string(i));
        if (i == attn)
            attention.collect(reg, "G.attention");
    }
    out_norm.collect(reg, "G.norm");
    to_rgb.collect(reg, "G.to_rgb");
    return reg;
}

template <typename Scalar>
std::vector<std::string> Generator<Scalar>::manifest()
{
    return parameter_manifest(registry());
}

template <typename Scalar>
Discriminator<Scalar>::Discriminator(const NetworkConfig& cfg, nn::Rng& rng) : cfg_(cfg)
{
    cfg_.validate();
    const auto mult = cfg_.discriminator_multipliers();
    const Index b = cfg_.base_channels;
    stem = nn::Conv2d<Scalar>(3, mult[0] * b, 3, true, rng);
    for (int i = 0; i < cfg_.residual_blocks; ++i)
        blocks.emplace_back(mult[i] * b, mult[i + 1] * b, true, rng);
    attention = nn::SelfAttention<Scalar>(mult[cfg_.discriminator_attention_block() + 1] * b, rng);
    const Index last = mult.back() * b;
    head_norm = CondNorm<Scalar>(last, cfg_.embedding_dim, cfg_.embedding_dim, cfg_.norm_mode, rng,
                                 static_cast<Scalar>(cfg_.epsilon));
    head = nn::Linear<Scalar>(last * 16, 1, true, rng);
}

template <typename Scalar>
Var<Scalar> Discriminator<Scalar>::forward(const Var<Scalar>& x, const Var<Scalar>& f, bool training)
{
    if (x.value().rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.resolution || x.dim(3) != cfg_.resolution)
        throw Error("discriminator: expected [N,3," + std::to_string(cfg_.resolution) + "," +
                    std::to_string(cfg_.resolution) + "], got " + nn::to_string(x.shape()));
    auto h = stem.forward(x, training);
    const int attn = cfg_.discriminator_attention_block();
    for (int i = 0; i < static_cast<int>(blocks.size()); ++i) {
        h = blocks[static_cast<std::size_t>(i)].forward(h, training);
        if (i == attn)
            h = attention.forward(h, training);
    }
    h = nn::relu(head_norm.forward(h, f, training));
    const Index n = x.dim(0);
    return head.forward(nn::reshape(h, Shape{n, h.value().size() / n}), training);
}

template <typename Scalar>
nn::ParamRegistry<Scalar> Discriminator<Scalar>::registry()
{
    nn::ParamRegistry<Scalar> reg;
    stem.collect(reg, "D.conv_in");
    const int attn = cfg_.discriminator_attention_block();
    for (int i = 0; i < static_cast<int>(blocks.size()); ++i) {
        blocks[static_cast<std::size_t>(i)].collect(reg, "D.down" + std::to_string(i));
        if (i == attn)
            attention.collect(reg, "D.attention");
    }
    head_norm.collect(reg, "D.cnorm");
    head.collect(reg, "D.head");
    return reg;
}

template <typename Scalar>
std::vector<std::string> Discriminator<Scalar>::manifest()
{
    return parameter_manifest(registry());
}

template <typename Scalar>
ConvEncoder<Scalar>::ConvEncoder(const EncoderConfig& cfg, nn::Rng& rng) : cfg_(cfg)
{
    if (cfg_.blocks < 1 || cfg_.base_channels < 1 || cfg_.output_dim < 1)
        throw Error("encoder config: blocks, base_channels and output_dim must be positive");
    if (cfg_.resolution % (1 << cfg_.blocks) != 0)
        throw Error("encoder config: resolution " + std::to_string(cfg_.resolution) +
                    " not divisible by 2^" + std::to_string(cfg_.blocks));
    Index c = cfg_.base_channels;
    stem = nn::Conv2d<Scalar>(3, c, 3, false, rng);
    for (int i = 0; i < cfg_.blocks; ++i) {
        blocks.emplace_back(c, 2 * c, false, rng);
        c *= 2;
    }
    head = nn::Linear<Scalar>(c, cfg_.output_dim, false, rng);
}

template <typename Scalar>
Var<Scalar> ConvEncoder<Scalar>::forward(const Var<Scalar>& images, bool training)
{
    if (images.value().rank() != 4 || images.dim(1) != 3 || images.dim(2) != cfg_.resolution ||
        images.dim(3) != cfg_.resolution)
        throw Error("encoder: expected [N,3," + std::to_string(cfg_.resolution) + "," +
                    std::to_string(cfg_.resolution) + "] images, got " + nn::to_string(images.shape()));
    auto h = stem.forward(images, training);
    for (auto& block : blocks)
        h = block.forward(h, training);
    return head.forward(nn::global_avg_pool(nn::relu(h)), training);
}

template <typename Scalar>
nn::ParamRegistry<Scalar> ConvEncoder<Scalar>::registry()
{
    nn::ParamRegistry<Scalar> reg;
    stem.collect(reg, "conv_in");
    for (std::size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(reg, "down" + std::to_string(i));
    head.collect(reg, "head");
    return reg;
}

template <typename Scalar>
std::vector<std::string> ConvEncoder<Scalar>::manifest()
{
    return parameter_manifest(registry());
}

template <typename Scalar>
std::vector<std::string> parameter_manifest(const nn::ParamRegistry<Scalar>& reg)
{
    std::vector<std::string> lines;
    for (const auto& p : reg.params())
        lines.push_back(p.name + " " + nn::to_string(p.var.shape()));
    for (const auto& b : reg.buffers())
        lines.push_back(b.name + " [" + std::to_string(b.data->size()) + "] (buffer)");
    return lines;
}

#define OPENGAN_INSTANTIATE_NETWORKS(S)                                                       \
    template class ResBlockUp<S>;                                                             \
    template class ResBlockDown<S>;                                                           \
    template class Generator<S>;                                                              \
    template class Discriminator<S>;                                                          \
    template class ConvEncoder<S>;                                                            \
    template std::vector<std::string> parameter_manifest<S>(const nn::ParamRegistry<S>&);

OPENGAN_INSTANTIATE_NETWORKS(float)
OPENGAN_INSTANTIATE_NETWORKS(double)

}  // namespace opengan

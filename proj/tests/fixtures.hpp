#pragma once

#include "opengan/augmentation.hpp"
#include "opengan/interpolation.hpp"

namespace opengan::testing {

inline NetworkConfig tiny_network(NormMode mode = NormMode::instance)
{
    NetworkConfig c;
    c.latent_dim = 6;
    c.base_channels = 2;
    c.resolution = 16;
    c.residual_blocks = 2;
    c.embedding_dim = 8;
    c.norm_mode = mode;
    return c;
}

/// Randomly initialised, frozen extractor matching tiny_network().
inline FeatureExtractor tiny_extractor(std::uint64_t seed = 3)
{
    nn::Rng rng(seed);
    FeatureExtractor F({16, 4, 2, 8}, rng);
    F.freeze();
    return F;
}

inline GanTrainConfig tiny_gan(int iterations = 3)
{
    GanTrainConfig g;
    g.batch_size = 4;
    g.max_iterations = iterations;
    g.checkpoint_every = 2;
    g.seed = 9;
    return g;
}

inline Dataset tiny_shapes(int per_class = 6) { return make_synthetic_shapes({per_class, 16, 1}); }

inline std::vector<float> parameter_values(const nn::ParamRegistry<float>& reg)
{
    std::vector<float> out;
    for (const auto& p : reg.params())
        out.insert(out.end(), p.var.value().data(), p.var.value().data() + p.var.value().size());
    return out;
}

}  // namespace opengan::testing

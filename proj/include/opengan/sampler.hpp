#pragma once

#include "opengan/gan_trainer.hpp"

namespace opengan {

/// Feature statistics of one declared partition ("train" or "novel").
struct FeatureStats {
    std::string partition;
    std::vector<std::string> class_names;
    Eigen::MatrixXf class_means;  // K x d
    Eigen::MatrixXf class_stds;   // K x d, population std (0 for singleton classes)
    float global_mean = 0;        // one value across all examples and dimensions
    float global_std = 0;         // sigma_F, likewise

    int class_row(const std::string& name) const;
};

FeatureStats compute_feature_stats(const Eigen::MatrixXf& features, const std::vector<int>& labels,
                                   const std::vector<std::string>& class_names, const std::string& partition);
FeatureStats compute_feature_stats(FeatureExtractor& F, const Dataset& dataset, const std::string& partition);

enum class ZPolicy { sampled, fixed };

ZPolicy parse_z_policy(const std::string& name);
const char* to_string(ZPolicy policy);

struct Samples {
    nn::Tensor<float> images;    // [n,3,R,R]
    nn::Tensor<float> features;  // conditioning used, [n,d]
    nn::Tensor<float> z;         // [n,latent]
};

/// Graph-free G(z, f) in eval mode, in chunks.
nn::Tensor<float> generate(Generator<float>& G, const nn::Tensor<float>& z, const nn::Tensor<float>& f,
                           nn::Index chunk = 64);

/// `count` images per source, source-major. With ZPolicy::fixed, column j
/// uses the same z for every source.
Samples sample_from_source(Generator<float>& G, FeatureExtractor& F, const nn::Tensor<float>& sources,
                           ZPolicy z_policy, int count, std::uint64_t seed);

/// f ~ N(class mean, (std_scale * class std)^2), one fresh z per sample.
Samples sample_class_mean(Generator<float>& G, const FeatureStats& stats, const std::string& class_name,
                          double std_scale, int count, std::uint64_t seed);

/// f ~ N(global mean, sigma_F^2) per dimension, z ~ N(0, 1). No labels involved.
Samples sample_random_feature(Generator<float>& G, const FeatureStats& stats, int count, std::uint64_t seed);

/// f + N(0, (eta * sigma_F)^2) per element.
nn::Tensor<float> perturb_feature(const nn::Tensor<float>& f, double eta, double sigma_F, nn::Rng& rng);

struct InformationSplit {
    double latent_variance = 0;   // spread of F(G(z, f)) over z at fixed f
    double feature_variance = 0;  // spread of F(G(z, f)) over f at fixed z
    double variance_ratio = 0;    // latent / feature
    double std_ratio = 0;         // sqrt of the above
    int probes = 0;
};

/// Per probe: one fixed f with `samples` latents, and one fixed z with
/// `samples` features drawn from `pool`. Spread is the mean squared distance
/// of F(G) to its centroid; both are averaged over probes.
InformationSplit information_split(Generator<float>& G, FeatureExtractor& F, const nn::Tensor<float>& pool,
                                   int probes, int samples, std::uint64_t seed);

/// GAN checkpoint for sampling; refuses an untrained (0-iteration) one.
GanModels load_gan_for_sampling(const std::filesystem::path& path, bool allow_untrained = false);

}  // namespace opengan

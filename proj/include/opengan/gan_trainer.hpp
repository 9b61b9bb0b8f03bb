#pragma once

#include "opengan/metric.hpp"
#include "opengan/networks.hpp"

#include <filesystem>
#include <functional>

namespace opengan {

struct GanTrainConfig {
    double lambda = 0.01;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.999;
    int batch_size = 48;
    int max_iterations = 10000;
    int checkpoint_every = 1000;
    int log_every = 1;
    bool augment = true;
    std::uint64_t seed = 0;

    void validate() const;
};

/// mean(relu(1 - d_real)) + mean(relu(1 + d_fake)).
nn::Var<float> hinge_discriminator_loss(const nn::Var<float>& d_real, const nn::Var<float>& d_fake);

struct GeneratorLoss {
    nn::Var<float> total;
    nn::Var<float> adversarial;  // -mean(d_fake)
    nn::Var<float> feature_mse;  // mean |F(fake) - f|^2
};

GeneratorLoss hinge_generator_loss(const nn::Var<float>& d_fake, const nn::Var<float>& fake_features,
                                   const nn::Var<float>& features, double lambda);

struct GanMetrics {
    long iteration = 0;
    double loss_d = 0;
    double loss_g_adv = 0;
    double feature_mse = 0;
};

/// Owns G, D and their optimisers; F is borrowed and must be frozen.
class GanTrainer {
public:
    GanTrainer(const NetworkConfig& net, FeatureExtractor& F, const GanTrainConfig& cfg);

    /// Updates D only. Fakes are generated without recording a graph.
    double discriminator_step(const nn::Tensor<float>& real, const nn::Tensor<float>& features,
                              const nn::Tensor<float>& z);
    /// Updates G only; gradients pass through D and F without changing them.
    std::pair<double, double> generator_step(const nn::Tensor<float>& features, const nn::Tensor<float>& z);
    /// One discriminator step then one generator step, each with its own z.
    GanMetrics iterate(const nn::Tensor<float>& real);

    nn::Tensor<float> sample_z(nn::Index n);

    Generator<float> G;
    Discriminator<float> D;
    long iteration() const { return iteration_; }
    const GanTrainConfig& config() const { return cfg_; }
    FeatureExtractor& extractor() { return *F_; }

    // instrumentation
    long d_steps = 0;
    long g_steps = 0;
    std::vector<std::uint64_t> z_hashes;  // one per drawn z batch, in order

private:
    void guard(double value, const char* what);

    FeatureExtractor* F_;
    GanTrainConfig cfg_;
    nn::Adam<float> opt_g_, opt_d_;
    nn::Rng z_rng_;
    long iteration_ = 0;

public:
    /// Where a non-finite loss dumps its diagnostics; empty disables the dump.
    std::filesystem::path diagnostic_dir;
};

nlohmann::json network_config_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);

/// Checkpoint with G, D, F and the configs that built them.
Checkpoint gan_checkpoint(GanTrainer& trainer, const nlohmann::json& provenance = {});

struct GanModels {
    Generator<float> G;
    Discriminator<float> D;
    FeatureExtractor F;
    long iterations = 0;
    nlohmann::json header;
};

GanModels load_gan(const Checkpoint& ckpt);

struct GanRunResult {
    std::vector<GanMetrics> log;
    std::filesystem::path final_checkpoint;
};

/// Algorithm loop: per iteration draw a real batch, take one D step and one G
/// step. Writes metrics.jsonl, checkpoints every `checkpoint_every` iterations
/// and gan_final.ckpt into `out_dir` (when non-empty).
GanRunResult train_gan(const Dataset& train, FeatureExtractor& F, const NetworkConfig& net,
                       const GanTrainConfig& cfg, const std::filesystem::path& out_dir,
                       const nlohmann::json& provenance = {},
                       const std::function<void(const GanMetrics&)>& on_log = {});

}  // namespace opengan

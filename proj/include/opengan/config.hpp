#pragma once

#include "opengan/augmentation.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace opengan {

struct DataConfig {
    std::string root;
    int image_size = 32;
    int train_classes = 82;
    bool augment = true;
};

struct MetricSection {
    int dim = 512;
    int base_channels = 16;
    int blocks = 3;
    double sigma = 10.0;
    double learning_rate = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int cache_refresh_period = 5;
    int epochs = 20;
    int batch_size = 32;
};

struct NetworkSection {
    int latent_dim = 128;
    int base_channels = 32;
    int generator_attention = -1;
    int discriminator_attention = -1;
    std::string norm = "batch";
    double epsilon = 1e-5;
};

struct GanSection {
    double lambda = 0.01;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.999;
    int batch_size = 48;
    int max_iterations = 10000;
    int checkpoint_every = 1000;
    int log_every = 1;
};

struct SamplerSection {
    double std_scale = 1.0;
    int count = 8;
    std::string z_policy = "sampled";  // or "fixed": one z per grid column
    double eta = 0.0;
    int split_probes = 20;
    int split_samples = 8;
    double split_factor = 2.0;
};

struct EvalSection {
    int fid_samples = 500;
    int samples_per_class = 50;
    int min_class_samples = 2;
    int retrieval_k = 1;
    int permutation_trials = 100;
};

struct AugmentSection {
    std::vector<int> shots{1, 2, 5, 10};
    std::vector<int> ratios{1, 2, 3, 4, 5};
    std::vector<double> etas{0.0, 1.5, 2.0};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int test_per_class = 20;
    int epochs = 60;
    int batch_size = 8;
    double learning_rate = 1e-3;
    int base_channels = 8;
    int blocks = 3;
};

/// Everything one run needs. Every section is optional in the file; missing
/// keys take the defaults above, unknown keys are rejected.
struct RunConfig {
    DataConfig data;
    MetricSection metric;
    NetworkSection networks;
    GanSection gan;
    SamplerSection sampler;
    EvalSection eval;
    AugmentSection augment;
    std::uint64_t seed = 0;
    std::string output_dir = "runs/default";

    void validate() const;
    int residual_blocks() const;
    NetworkConfig network_config() const;
    MetricTrainConfig metric_config() const;
    EncoderConfig classifier_config(int classes) const;
    GanTrainConfig gan_config() const;
    /// Classifier settings shared by every augmentation run; shots, ratio and eta stay at their defaults.
    AugmentConfig augment_config() const;
    SweepSpec sweep_spec() const;
    nlohmann::json to_json() const;
    /// 16 hex digits identifying the full config.
    std::string hash() const;
};

RunConfig config_from_json(const nlohmann::json& j);
RunConfig parse_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace opengan

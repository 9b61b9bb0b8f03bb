#pragma once

#include "opengan/checkpoint.hpp"
#include "opengan/data.hpp"
#include "opengan/networks.hpp"

#include <functional>
#include <optional>

namespace opengan {

/// The metric network F: an encoder mapping images to d-dimensional features.
/// Once frozen its parameters stop requiring gradients, but gradients still
/// flow through it to the input.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(const EncoderConfig& cfg, nn::Rng& rng);

    /// images [N,3,R,R] -> [N,d]. Shape mismatch throws.
    nn::Var<float> forward(const nn::Var<float>& images);
    /// Graph-free extraction in chunks.
    nn::Tensor<float> extract(const nn::Tensor<float>& images, nn::Index chunk = 64);
    nn::Tensor<float> extract(const Dataset& dataset, nn::Index chunk = 64);

    void freeze();
    bool frozen() const { return frozen_; }
    int dim() const { return encoder.config().output_dim; }
    const EncoderConfig& config() const { return encoder.config(); }
    nn::ParamRegistry<float> registry() { return encoder.registry(); }
    std::uint64_t hash() { return registry().hash(); }

    ConvEncoder<float> encoder;

private:
    bool frozen_ = false;
};

/// Cached kernel centres: one stored feature per training image.
struct CenterCache {
    Eigen::MatrixXf centres;  // n x d, row i <-> training item i
    std::vector<int> labels;
    int epoch_of_last_refresh = -1;

    std::size_t size() const { return labels.size(); }
};

CenterCache refresh_cache(FeatureExtractor& F, const Dataset& train, int epoch = 0);

enum class UnmatchedPolicy { error, skip };

template <typename Scalar>
struct NcaResult {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Scalar loss = 0;
    Matrix grad;                       // d loss / d batch, same shape as batch
    std::vector<std::size_t> skipped;  // batch rows without a same-class centre
};

/// Cached-centre NCA loss summed over the batch:
///   -sum_i ln( sum_{j: l_j = l_i, j != i} K(c_i, c^_j) / sum_{k != i} K(c_i, c^_k) ),
///   K(a, b) = exp(-|a - b|^2 / (2 sigma^2)).
/// `self_rows[i]` names the cache row holding batch item i itself (excluded
/// from both sums) or -1 when the item is not cached.
template <typename Scalar>
NcaResult<Scalar> nca_loss(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& batch,
                           const std::vector<int>& batch_labels, const std::vector<long>& self_rows,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& centres,
                           const std::vector<int>& centre_labels, Scalar sigma,
                           UnmatchedPolicy policy = UnmatchedPolicy::error);

/// Autograd wrapper around nca_loss; gradient reaches `features` only.
nn::Var<float> nca_loss_op(const nn::Var<float>& features, const std::vector<int>& labels,
                           const std::vector<long>& self_rows, const CenterCache& cache, float sigma,
                           std::vector<std::size_t>* skipped = nullptr);

struct MetricTrainConfig {
    EncoderConfig encoder;
    double sigma = 10.0;
    double learning_rate = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int cache_refresh_period = 5;
    int epochs = 20;
    int batch_size = 32;
    bool augment = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MetricEpochLog {
    int epoch = 0;
    double mean_loss = 0;
    bool cache_refreshed = false;
    std::size_t skipped = 0;
};

struct MetricTrainResult {
    FeatureExtractor extractor;
    std::vector<MetricEpochLog> log;
};

/// Adam on the cached-centre NCA loss, refreshing the cache every
/// `cache_refresh_period` epochs (starting at epoch 0). The returned extractor is frozen.
MetricTrainResult train_metric(const Dataset& train, const MetricTrainConfig& cfg,
                               const std::function<void(const MetricEpochLog&)>& on_epoch = {});

struct RetrievalReport {
    double recall = 0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;  // items whose class has no other member
};

/// Fraction of items whose k nearest neighbours (self excluded) include a
/// same-class item.
RetrievalReport retrieval_recall(const Eigen::MatrixXf& features, const std::vector<int>& labels, int k);
RetrievalReport retrieval_eval(FeatureExtractor& F, const Dataset& dataset, int k);
/// Mean recall over random relabelings of the same features.
double permutation_baseline(const Eigen::MatrixXf& features, const std::vector<int>& labels, int k,
                            int trials, std::uint64_t seed);

/// Mean Euclidean distance over same-class and different-class pairs.
std::pair<double, double> intra_inter_distance(const Eigen::MatrixXf& features, const std::vector<int>& labels);

Checkpoint metric_checkpoint(FeatureExtractor& F, const MetricTrainConfig& cfg,
                             std::uint64_t split_hash, const nlohmann::json& provenance = {});
/// Rebuilds a frozen extractor from a metric checkpoint.
FeatureExtractor load_feature_extractor(const Checkpoint& ckpt);

/// [N, ...] tensor copied into an N-row matrix.
inline Eigen::MatrixXf as_rows(const nn::Tensor<float>& t)
{
    using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    return Eigen::Map<const RowMajor>(t.data(), t.dim(0), t.size() / std::max<nn::Index>(t.dim(0), 1));
}

}  // namespace opengan

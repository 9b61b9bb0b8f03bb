#pragma once

#include "opengan/metric.hpp"

#include <map>

namespace opengan {

template <typename Scalar>
struct GaussianMoments {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Vector mean;
    Matrix cov;
    Eigen::Index count = 0;
};

/// Mean and unbiased covariance of the rows of `samples` (n >= 2).
template <typename Scalar>
GaussianMoments<Scalar> gaussian_moments(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& samples);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), clamped at 0.
/// tr (S_a S_b)^(1/2) is taken from the symmetric product S_a^(1/2) S_b S_a^(1/2)
/// with negative eigenvalues clamped to 0.
template <typename Scalar>
Scalar frechet_distance(const GaussianMoments<Scalar>& a, const GaussianMoments<Scalar>& b);

/// Frechet distance between embedded sets, features computed by the frozen F.
double fid(FeatureExtractor& F, const nn::Tensor<float>& real, const nn::Tensor<float>& fake);
double fid_from_features(const Eigen::MatrixXf& real, const Eigen::MatrixXf& fake);

struct ClassFid {
    std::string name;
    double fid = 0;
};

struct IntraFidReport {
    double mean = 0;
    std::vector<ClassFid> classes;
    std::vector<std::string> skipped;  // below the minimum sample count
};

/// Mean of per-class Frechet distances. Inputs map class name -> (real, fake) features.
IntraFidReport intra_fid(const std::map<std::string, std::pair<Eigen::MatrixXf, Eigen::MatrixXf>>& per_class,
                         int min_samples = 2);

struct FeatureMatchReport {
    double matched_mse = 0;
    double baseline_mse = 0;  // NaN when fewer than 2 pairs
    std::size_t pairs = 0;
};

/// Mean |F(gen_i) - f_i|^2 for matched pairs and for a random derangement.
FeatureMatchReport feature_match_from_features(const Eigen::MatrixXf& conditioning, const Eigen::MatrixXf& generated,
                                               std::uint64_t seed);
FeatureMatchReport feature_match_report(FeatureExtractor& F, const nn::Tensor<float>& sources,
                                        const nn::Tensor<float>& generated, std::uint64_t seed);

/// Permutation of 0..n-1 with no fixed point (n >= 2).
std::vector<std::size_t> random_derangement(std::size_t n, nn::Rng& rng);

struct EmbeddingRecord {
    std::string id;
    std::string label;
    std::vector<float> values;
};

/// One line per item: id <TAB> class <TAB> space-separated shortest round-trip floats.
void export_embeddings(FeatureExtractor& F, const Dataset& dataset, const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);

}  // namespace opengan

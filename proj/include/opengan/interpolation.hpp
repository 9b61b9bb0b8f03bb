#pragma once

#include "opengan/sampler.hpp"

#include <map>

namespace opengan {

/// Images laid out row-major: row j follows the feature axis t_j, column i
/// the latent axis s_i. Interpolation is linear on both axes.
struct InterpolationGrid {
    nn::Tensor<float> z_a, z_b, f_a, f_b;  // [1,latent] / [1,d]
    int steps = 0;
    std::vector<float> s;  // latent axis parameters, 0 .. 1
    std::vector<float> t;  // feature axis parameters, 0 .. 1
    nn::Tensor<float> images;  // [steps*steps,3,R,R]
    std::string scheme = "linear";

    nn::Tensor<float> image(int latent_index, int feature_index) const;
};

/// (1 - u) a + u b, exact at u = 0 and u = 1.
nn::Tensor<float> lerp(const nn::Tensor<float>& a, const nn::Tensor<float>& b, float u);

InterpolationGrid interpolate_2d(Generator<float>& G, const nn::Tensor<float>& z_a, const nn::Tensor<float>& z_b,
                                 const nn::Tensor<float>& f_a, const nn::Tensor<float>& f_b, int steps);

struct AttributeDirection {
    std::string name;
    Eigen::VectorXf latent;   // unit, points from the positive to the negative group
    Eigen::VectorXf feature;  // likewise
    Eigen::VectorXf latent_positive_mean, latent_negative_mean;
    Eigen::VectorXf feature_positive_mean, feature_negative_mean;
    std::size_t positives = 0, negatives = 0;
    bool latent_degenerate = false;
    bool feature_degenerate = false;
    std::string sign_convention = "negative_mean - positive_mean";

    bool degenerate() const { return latent_degenerate && feature_degenerate; }
};

using AttributeLabels = std::map<std::string, int>;  // attribute -> +1 / -1

/// One direction per attribute seen in `labels`. Row i of `latents` and
/// `features` belongs to labels[i]; either matrix may have zero columns when
/// that space is unavailable (then its direction is flagged degenerate).
std::vector<AttributeDirection> find_attribute_directions(const Eigen::MatrixXf& latents,
                                                          const Eigen::MatrixXf& features,
                                                          const std::vector<AttributeLabels>& labels);

enum class TraverseSpace { latent, feature };

/// One image per scale: the chosen space's vector is moved by scale * direction,
/// the other stays fixed. z [1,latent], f [1,d].
nn::Tensor<float> traverse(Generator<float>& G, const nn::Tensor<float>& z, const nn::Tensor<float>& f,
                           const AttributeDirection& direction, TraverseSpace space, const std::vector<float>& scales);

/// Label file: one JSON object per line, {"id": "...", "attrs": {"name": 1 or -1, ...}}.
std::map<std::string, AttributeLabels> read_attribute_labels(const std::filesystem::path& path);

}  // namespace opengan

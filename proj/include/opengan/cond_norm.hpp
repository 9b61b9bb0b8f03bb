#pragma once

#include "opengan/nn/layers.hpp"

#include <utility>
#include <vector>

namespace opengan {

using nn::NormMode;

/// Normalisation whose per-channel scale and bias are a continuous function of
/// a conditioning embedding: embedding -> FC -> ReLU -> FC -> (gamma, alpha).
template <typename Scalar>
class CondNorm {
public:
    CondNorm() = default;
    CondNorm(nn::Index channels, nn::Index embedding_dim, nn::Index hidden_dim, NormMode mode,
             nn::Rng& rng, Scalar eps = Scalar(1e-5));

    /// x [N,C,H,W]; embedding [N,d] or a single shared row [1,d].
    nn::Var<Scalar> forward(const nn::Var<Scalar>& x, const nn::Var<Scalar>& embedding, bool training);
    /// (gamma [N,C], alpha [N,C]) for each embedding row.
    std::pair<nn::Var<Scalar>, nn::Var<Scalar>> scale_bias(const nn::Var<Scalar>& embedding);
    void collect(nn::ParamRegistry<Scalar>& reg, const std::string& prefix);

    nn::Index channels() const { return channels_; }
    nn::Index embedding_dim() const { return hidden.in_features(); }

    nn::Linear<Scalar> hidden;
    nn::Linear<Scalar> project;
    NormMode mode = NormMode::batch;
    Scalar eps = Scalar(1e-5);
    nn::RunningStats<Scalar> running;

private:
    nn::Index channels_ = 0;
};

/// Baseline: one learned embedding per training class feeding the same projection.
/// Only the classes given at construction can be looked up.
template <typename Scalar>
class ClassCondNorm {
public:
    ClassCondNorm() = default;
    ClassCondNorm(std::vector<int> class_ids, nn::Index channels, nn::Index embedding_dim,
                  NormMode mode, nn::Rng& rng, Scalar eps = Scalar(1e-5));

    nn::Var<Scalar> forward(const nn::Var<Scalar>& x, const std::vector<int>& class_ids, bool training);
    nn::Var<Scalar> forward(const nn::Var<Scalar>& x, int class_id, bool training);
    std::pair<nn::Var<Scalar>, nn::Var<Scalar>> scale_bias(int class_id);
    nn::Var<Scalar> lookup(const std::vector<int>& class_ids) const;
    bool knows(int class_id) const;
    void collect(nn::ParamRegistry<Scalar>& reg, const std::string& prefix);

    nn::Var<Scalar> embeddings;  // [K, d]
    CondNorm<Scalar> norm;

private:
    std::vector<int> class_ids_;
};

}  // namespace opengan

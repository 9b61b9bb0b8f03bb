#pragma once

#include "opengan/nn/autograd.hpp"

#include <optional>
#include <vector>

namespace opengan::nn {

// Elementwise.
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& x, Scalar factor);
template <typename Scalar> Var<Scalar> add_scalar(const Var<Scalar>& x, Scalar offset);
template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> tanh(const Var<Scalar>& x);
/// x * s where s is a one-element tensor (learned gate).
template <typename Scalar> Var<Scalar> mul_gate(const Var<Scalar>& x, const Var<Scalar>& gate);

// Reductions and reshapes.
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> reshape(const Var<Scalar>& x, Shape shape);
/// Mean over rows of the squared Euclidean row norm: (1/N) sum_n ||x_n||^2.
template <typename Scalar> Var<Scalar> mean_row_sq_norm(const Var<Scalar>& x);
/// [N,C,H,W] -> [N,C], averaging over space.
template <typename Scalar> Var<Scalar> global_avg_pool(const Var<Scalar>& x);

// Dense layers.
/// x [N,in], weight [out,in], bias [out] or undefined -> [N,out].
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias);
/// Stride-1 convolution with zero padding. weight [Co,Ci,k,k], bias [Co] or undefined.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   Index padding);
template <typename Scalar> Var<Scalar> upsample_nearest2x(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> avg_pool2x(const Var<Scalar>& x);

enum class NormMode { batch, instance };

/// Running statistics for batch-mode normalisation.
template <typename Scalar>
struct RunningStats {
    Eigen::Array<Scalar, Eigen::Dynamic, 1> mean;
    Eigen::Array<Scalar, Eigen::Dynamic, 1> var;
    Scalar momentum = Scalar(0.1);
};

/// (x - mu) / sqrt(v + eps). Batch mode pools (N,H,W) per channel, instance mode
/// pools (H,W) per (n,c). When `running` is given in batch mode it is updated
/// in training and used in place of the batch moments otherwise.
template <typename Scalar>
Var<Scalar> standardize(const Var<Scalar>& x, NormMode mode, Scalar eps, bool training,
                        RunningStats<Scalar>* running = nullptr);

/// y[n,c,h,w] = gamma[n,c] * x[n,c,h,w] + beta[n,c].
template <typename Scalar>
Var<Scalar> channel_affine(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta);

/// Dot-product attention over positions. query/key [N,Ck,L], value [N,Cv,L] -> [N,Cv,L].
/// out[:, i] = sum_j softmax_j(q_i . k_j) v[:, j].
template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& query, const Var<Scalar>& key, const Var<Scalar>& value);
/// Attention weights [N,L,L] (row i = distribution over keys for query i).
template <typename Scalar>
Tensor<Scalar> attention_weights(const Tensor<Scalar>& query, const Tensor<Scalar>& key);

/// weight / (u^T W v) with u, v held constant; W viewed as [dim0, rest].
template <typename Scalar>
Var<Scalar> spectral_scale(const Var<Scalar>& weight,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v);

/// Mean softmax cross-entropy. logits [N,K].
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(const Var<Scalar>& logits, const std::vector<int>& labels);

}  // namespace opengan::nn

#pragma once

#include "opengan/nn/ops.hpp"
#include "opengan/nn/random.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace opengan::testing {

using VarD = nn::Var<double>;

/// Worst relative error between backprop gradients and central differences
/// of a scalar function, across every input that requires gradients.
inline double max_grad_error(const std::vector<VarD>& inputs,
                             const std::function<VarD()>& loss_fn, double h = 1e-6)
{
    for (const auto& in : inputs)
        in.zero_grad();
    nn::backward(loss_fn());
    double worst = 0;
    for (const auto& in : inputs) {
        if (!in.requires_grad())
            continue;
        const auto analytic = in.grad().array().eval();
        Eigen::ArrayXd numeric(analytic.size());
        auto& values = const_cast<VarD&>(in).mutable_value();
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            double plus, minus;
            {
                nn::NoGradGuard guard;
                values[i] = saved + h;
                plus = loss_fn().value()[0];
                values[i] = saved - h;
                minus = loss_fn().value()[0];
            }
            values[i] = saved;
            numeric[i] = (plus - minus) / (2 * h);
        }
        const double scale = std::max({analytic.matrix().norm(), numeric.matrix().norm(), 1e-8});
        worst = std::max(worst, (analytic - numeric).matrix().norm() / scale);
    }
    return worst;
}

inline VarD random_var(nn::Shape shape, nn::Rng& rng, bool requires_grad = true, double stddev = 1.0)
{
    return VarD(rng.normal_tensor<double>(std::move(shape), stddev), requires_grad);
}

/// Weighted sum with fixed random weights, so every output element matters.
inline VarD probe(const VarD& x, std::uint64_t seed = 99)
{
    nn::Rng rng(seed);
    VarD w(rng.normal_tensor<double>(x.shape()), false);
    return nn::sum(nn::mul(x, w));
}

}  // namespace opengan::testing

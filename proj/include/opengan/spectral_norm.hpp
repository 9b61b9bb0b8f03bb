#pragma once

#include <Eigen/Core>

#include <cmath>

namespace opengan {

template <typename Scalar>
struct SpectralEstimate {
    Scalar sigma = Scalar(0);
    int iterations = 0;
};

/// Largest singular value of `weight` by power iteration, starting from
/// `u0` (left vector guess). Stops early when the estimate changes by less
/// than `rel_tol` relative.
template <typename Derived>
SpectralEstimate<typename Derived::Scalar> power_iteration(
    const Eigen::MatrixBase<Derived>& weight,
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> u0, int max_iterations,
    typename Derived::Scalar rel_tol = typename Derived::Scalar(0))
{
    using Scalar = typename Derived::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    SpectralEstimate<Scalar> est;
    Vec u = u0.normalized();
    Vec v;
    for (int it = 0; it < max_iterations; ++it) {
        v = weight.transpose() * u;
        const Scalar vn = v.norm();
        if (vn == Scalar(0))
            return est;
        v /= vn;
        u = weight * v;
        const Scalar un = u.norm();
        if (un == Scalar(0))
            return est;
        u /= un;
        const Scalar sigma = u.dot(weight * v);
        est.iterations = it + 1;
        const bool settled = std::abs(sigma - est.sigma) <= rel_tol * std::abs(sigma);
        est.sigma = sigma;
        if (rel_tol > Scalar(0) && settled)
            break;
    }
    return est;
}

/// weight / sigma_max, with sigma_max from `iterations` power steps. A zero
/// matrix comes back unchanged.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> spectral_normalize(
    const Eigen::MatrixBase<Derived>& weight, int iterations,
    typename Derived::Scalar rel_tol = typename Derived::Scalar(0))
{
    using Scalar = typename Derived::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    // Deterministic start that is never orthogonal to a generic top singular vector.
    Vec u0(weight.rows());
    for (Eigen::Index i = 0; i < u0.size(); ++i)
        u0[i] = Scalar(1) + Scalar(i % 7) / Scalar(7);
    const auto est = power_iteration(weight, u0, iterations, rel_tol);
    if (!(est.sigma > Scalar(0)))
        return weight;
    return weight / est.sigma;
}

}  // namespace opengan

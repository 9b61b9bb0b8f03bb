#pragma once

// Independent reference computations shared by unit and acceptance tests.

#include "opengan/nn/random.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>

namespace opengan::oracle {

/// |mu_a - mu_b|^2 + tr(Sa + Sb) - 2 sum sqrt(eig(Sa Sb)). The eigenvalues of
/// the (non-symmetric) product come from the general real eigensolver.
inline double frechet(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& sa, const Eigen::VectorXd& mu_b,
                      const Eigen::MatrixXd& sb)
{
    Eigen::EigenSolver<Eigen::MatrixXd> es(sa * sb, false);
    double root = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        root += std::sqrt(std::max(es.eigenvalues()[i].real(), 0.0));
    return (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2 * root;
}

/// Random symmetric PSD matrix of rank <= rank.
inline Eigen::MatrixXd random_psd(Eigen::Index n, Eigen::Index rank, nn::Rng& rng)
{
    Eigen::MatrixXd a(n, rank);
    for (Eigen::Index i = 0; i < a.size(); ++i)
        a(i) = rng.normal();
    return a * a.transpose() / static_cast<double>(rank);
}

inline double largest_singular_value(const Eigen::MatrixXd& m)
{
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

}  // namespace opengan::oracle

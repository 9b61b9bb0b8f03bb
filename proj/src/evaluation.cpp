#include "opengan/evaluation.hpp"

#include <Eigen/Eigenvalues>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace opengan {

template <typename Scalar>
GaussianMoments<Scalar> gaussian_moments(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& samples)
{
    if (samples.rows() < 2)
        throw Error("gaussian_moments: need at least 2 samples, got " + std::to_string(samples.rows()));
    if (!samples.allFinite())
        throw Error("gaussian_moments: non-finite sample");
    GaussianMoments<Scalar> m;
    m.count = samples.rows();
    m.mean = samples.colwise().mean().transpose();
    const auto centred = (samples.rowwise() - m.mean.transpose()).eval();
    m.cov = (centred.transpose() * centred) / static_cast<Scalar>(m.count - 1);
    return m;
}

template <typename Scalar>
Scalar frechet_distance(const GaussianMoments<Scalar>& a, const GaussianMoments<Scalar>& b)
{
    using Matrix = typename GaussianMoments<Scalar>::Matrix;
    if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows() || a.cov.rows() != a.mean.size())
        throw Error("frechet_distance: dimension mismatch (" + std::to_string(a.mean.size()) + " vs " +
                    std::to_string(b.mean.size()) + ")");
    if (!a.mean.allFinite() || !b.mean.allFinite() || !a.cov.allFinite() || !b.cov.allFinite())
        throw Error("frechet_distance: non-finite moments");
    // identical moments: skip the decomposition so rounding cannot leave a residue
    if (a.mean == b.mean && a.cov == b.cov)
        return Scalar(0);

    const Matrix sa = (a.cov + a.cov.transpose()) / 2, sb = (b.cov + b.cov.transpose()) / 2;
    Eigen::SelfAdjointEigenSolver<Matrix> eig_a(sa);
    const auto root_vals = eig_a.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
    const Matrix root_a = eig_a.eigenvectors() * root_vals.asDiagonal() * eig_a.eigenvectors().transpose();
    Matrix product = root_a * sb * root_a;
    product = (product + product.transpose()) / 2;
    Eigen::SelfAdjointEigenSolver<Matrix> eig_p(product, Eigen::EigenvaluesOnly);
    const Scalar trace_root = eig_p.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt().sum();

    const Scalar d = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2 * trace_root;
    return std::max(d, Scalar(0));
}

template struct GaussianMoments<float>;
template struct GaussianMoments<double>;
template GaussianMoments<float> gaussian_moments(const Eigen::MatrixXf&);
template GaussianMoments<double> gaussian_moments(const Eigen::MatrixXd&);
template float frechet_distance(const GaussianMoments<float>&, const GaussianMoments<float>&);
template double frechet_distance(const GaussianMoments<double>&, const GaussianMoments<double>&);

double fid_from_features(const Eigen::MatrixXf& real, const Eigen::MatrixXf& fake)
{
    // moments in double: float covariance of a few hundred samples loses ~1e-4
    return frechet_distance(gaussian_moments<double>(real.cast<double>()),
                            gaussian_moments<double>(fake.cast<double>()));
}

double fid(FeatureExtractor& F, const nn::Tensor<float>& real, const nn::Tensor<float>& fake)
{
    return fid_from_features(as_rows(F.extract(real)), as_rows(F.extract(fake)));
}

IntraFidReport intra_fid(const std::map<std::string, std::pair<Eigen::MatrixXf, Eigen::MatrixXf>>& per_class,
                         int min_samples)
{
    min_samples = std::max(min_samples, 2);
    IntraFidReport report;
    for (const auto& [name, sets] : per_class) {
        if (sets.first.rows() < min_samples || sets.second.rows() < min_samples) {
            std::cerr << "warning: intra-FID skips class '" << name << "' (" << sets.first.rows() << " real, "
                      << sets.second.rows() << " fake; minimum " << min_samples << ")\n";
            report.skipped.push_back(name);
            continue;
        }
        report.classes.push_back({name, fid_from_features(sets.first, sets.second)});
    }
    if (report.classes.empty())
        throw Error("intra_fid: no class has enough samples");
    for (const auto& c : report.classes)
        report.mean += c.fid;
    report.mean /= static_cast<double>(report.classes.size());
    return report;
}

std::vector<std::size_t> random_derangement(std::size_t n, nn::Rng& rng)
{
    if (n < 2)
        throw Error("a derangement needs at least 2 items");
    // Sattolo: a uniformly random n-cycle, which has no fixed point
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(p[i], p[rng.below(i)]);
    return p;
}

FeatureMatchReport feature_match_from_features(const Eigen::MatrixXf& conditioning, const Eigen::MatrixXf& generated,
                                               std::uint64_t seed)
{
    if (conditioning.rows() != generated.rows() || conditioning.cols() != generated.cols())
        throw Error("feature_match: conditioning and generated features differ in shape");
    FeatureMatchReport r;
    r.pairs = static_cast<std::size_t>(conditioning.rows());
    if (r.pairs == 0)
        throw Error("feature_match: no pairs");
    r.matched_mse = (generated - conditioning).rowwise().squaredNorm().mean();
    r.baseline_mse = std::numeric_limits<double>::quiet_NaN();
    if (r.pairs >= 2) {
        nn::Rng rng(seed);
        const auto perm = random_derangement(r.pairs, rng);
        double total = 0;
        for (std::size_t i = 0; i < r.pairs; ++i)
            total += (generated.row(static_cast<Eigen::Index>(perm[i])) - conditioning.row(static_cast<Eigen::Index>(i)))
                         .squaredNorm();
        r.baseline_mse = total / static_cast<double>(r.pairs);
    }
    return r;
}

FeatureMatchReport feature_match_report(FeatureExtractor& F, const nn::Tensor<float>& sources,
                                        const nn::Tensor<float>& generated, std::uint64_t seed)
{
    return feature_match_from_features(as_rows(F.extract(sources)), as_rows(F.extract(generated)), seed);
}

void write_embeddings(const fs::path& path, const std::vector<EmbeddingRecord>& records)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("could not write embeddings to '" + path.string() + "'");
    char buf[64];
    for (const auto& r : records) {
        out << r.id << '\t' << r.label << '\t';
        for (std::size_t j = 0; j < r.values.size(); ++j) {
            auto res = std::to_chars(buf, buf + sizeof buf, r.values[j]);
            if (j)
                out << ' ';
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
    if (!out)
        throw Error("failed writing embeddings to '" + path.string() + "'");
}

void export_embeddings(FeatureExtractor& F, const Dataset& dataset, const fs::path& path)
{
    const auto f = as_rows(F.extract(dataset));
    std::vector<EmbeddingRecord> records(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        records[i].id = dataset.ids[i];
        records[i].label = dataset.class_names[static_cast<std::size_t>(dataset.labels[i])];
        records[i].values.assign(f.cols(), 0.0f);
        for (Eigen::Index j = 0; j < f.cols(); ++j)
            records[i].values[static_cast<std::size_t>(j)] = f(static_cast<Eigen::Index>(i), j);
    }
    write_embeddings(path, records);
}

std::vector<EmbeddingRecord> read_embeddings(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("could not read embeddings from '" + path.string() + "'");
    std::vector<EmbeddingRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto t1 = line.find('\t'), t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw Error("malformed embedding line " + std::to_string(out.size() + 1));
        EmbeddingRecord r{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), {}};
        const char* p = line.data() + t2 + 1;
        const char* end = line.data() + line.size();
        while (p < end) {
            float v;
            auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc())
                throw Error("malformed number in embedding line " + std::to_string(out.size() + 1));
            r.values.push_back(v);
            p = res.ptr;
            while (p < end && *p == ' ')
                ++p;
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace opengan

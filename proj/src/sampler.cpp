#include "opengan/sampler.hpp"

#include <algorithm>
#include <numeric>

namespace opengan {

using nn::Tensor;
using nn::Var;

int FeatureStats::class_row(const std::string& name) const
{
    auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end())
        throw Error("class '" + name + "' is not in the " + partition + " partition statistics");
    return static_cast<int>(it - class_names.begin());
}

FeatureStats compute_feature_stats(const Eigen::MatrixXf& features, const std::vector<int>& labels,
                                   const std::vector<std::string>& class_names, const std::string& partition)
{
    if (features.rows() == 0 || static_cast<Eigen::Index>(labels.size()) != features.rows())
        throw Error("feature stats: need one label per feature row");
    const auto K = static_cast<Eigen::Index>(class_names.size());
    const auto d = features.cols();
    FeatureStats s;
    s.partition = partition;
    s.class_names = class_names;
    // accumulate in double so the statistics do not depend on summation luck
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(K, d), sq = Eigen::MatrixXd::Zero(K, d);
    std::vector<double> count(static_cast<std::size_t>(K), 0.0);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const int c = labels[static_cast<std::size_t>(i)];
        if (c < 0 || c >= K)
            throw Error("feature stats: label out of range");
        const Eigen::RowVectorXd row = features.row(i).cast<double>();
        sum.row(c) += row;
        sq.row(c) += row.cwiseProduct(row);
        count[static_cast<std::size_t>(c)] += 1;
    }
    s.class_means.resize(K, d);
    s.class_stds.resize(K, d);
    for (Eigen::Index c = 0; c < K; ++c) {
        const double n = count[static_cast<std::size_t>(c)];
        if (n == 0)
            throw Error("feature stats: class '" + class_names[static_cast<std::size_t>(c)] + "' has no samples");
        const Eigen::RowVectorXd mean = sum.row(c) / n;
        const Eigen::RowVectorXd var = (sq.row(c) / n - mean.cwiseProduct(mean)).cwiseMax(0.0);
        s.class_means.row(c) = mean.cast<float>();
        s.class_stds.row(c) = var.cwiseSqrt().cast<float>();
    }
    const Eigen::ArrayXd all = features.cast<double>().reshaped().array();
    const double mean = all.mean();
    s.global_mean = static_cast<float>(mean);
    s.global_std = static_cast<float>(std::sqrt(std::max(0.0, (all - mean).square().mean())));
    return s;
}

FeatureStats compute_feature_stats(FeatureExtractor& F, const Dataset& dataset, const std::string& partition)
{
    return compute_feature_stats(as_rows(F.extract(dataset)), dataset.labels, dataset.class_names, partition);
}

ZPolicy parse_z_policy(const std::string& name)
{
    if (name == "sampled")
        return ZPolicy::sampled;
    if (name == "fixed")
        return ZPolicy::fixed;
    throw Error("unknown z policy '" + name + "' (expected sampled or fixed)");
}

const char* to_string(ZPolicy policy) { return policy == ZPolicy::fixed ? "fixed" : "sampled"; }

Tensor<float> generate(Generator<float>& G, const Tensor<float>& z, const Tensor<float>& f, nn::Index chunk)
{
    const nn::Index n = z.dim(0);
    if (f.dim(0) != n)
        throw Error("generate: z and f batch sizes differ");
    nn::NoGradGuard guard;
    const nn::Index R = G.config().resolution, per = 3 * R * R;
    Tensor<float> out(nn::Shape{n, 3, R, R});
    const nn::Index zd = z.size() / std::max<nn::Index>(n, 1), fd = f.size() / std::max<nn::Index>(n, 1);
    for (nn::Index start = 0; start < n; start += chunk) {
        const nn::Index m = std::min(chunk, n - start);
        Tensor<float> zc(nn::Shape{m, zd}), fc(nn::Shape{m, fd});
        zc.array() = z.array().segment(start * zd, m * zd);
        fc.array() = f.array().segment(start * fd, m * fd);
        auto img = G.forward(Var<float>(std::move(zc), false), Var<float>(std::move(fc), false), false);
        out.array().segment(start * per, m * per) = img.value().array();
    }
    return out;
}

namespace {

Tensor<float> repeat_rows(const Tensor<float>& rows, nn::Index times)
{
    const nn::Index n = rows.dim(0), d = rows.size() / std::max<nn::Index>(n, 1);
    Tensor<float> out(nn::Shape{n * times, d});
    for (nn::Index i = 0; i < n; ++i)
        for (nn::Index t = 0; t < times; ++t)
            out.array().segment((i * times + t) * d, d) = rows.array().segment(i * d, d);
    return out;
}

}  // namespace

Samples sample_from_source(Generator<float>& G, FeatureExtractor& F, const Tensor<float>& sources, ZPolicy z_policy,
                           int count, std::uint64_t seed)
{
    if (count < 1)
        throw Error("sample_from_source: count must be >= 1");
    const nn::Index S = sources.dim(0);
    nn::Rng rng(nn::derive_seed(seed, "sampler.source.z"));
    const nn::Index latent = G.config().latent_dim;
    Samples s;
    s.features = repeat_rows(F.extract(sources), count);
    if (z_policy == ZPolicy::fixed) {
        auto columns = rng.normal_tensor<float>({count, latent});
        s.z = Tensor<float>(nn::Shape{S * count, latent});
        for (nn::Index i = 0; i < S; ++i)
            s.z.array().segment(i * count * latent, count * latent) = columns.array();
    } else {
        s.z = rng.normal_tensor<float>({S * count, latent});
    }
    s.images = generate(G, s.z, s.features);
    return s;
}

Samples sample_class_mean(Generator<float>& G, const FeatureStats& stats, const std::string& class_name,
                          double std_scale, int count, std::uint64_t seed)
{
    if (std_scale < 0)
        throw Error("sample_class_mean: std_scale must be >= 0");
    if (count < 1)
        throw Error("sample_class_mean: count must be >= 1");
    const int c = stats.class_row(class_name);
    const nn::Index d = stats.class_means.cols();
    nn::Rng f_rng(nn::derive_seed(seed, "sampler.class_mean.f"));
    nn::Rng z_rng(nn::derive_seed(seed, "sampler.class_mean.z"));
    Samples s;
    s.features = Tensor<float>(nn::Shape{count, d});
    for (nn::Index i = 0; i < count; ++i)
        for (nn::Index j = 0; j < d; ++j)
            s.features[i * d + j] = static_cast<float>(stats.class_means(c, j) +
                                                       std_scale * stats.class_stds(c, j) * f_rng.normal());
    s.z = z_rng.normal_tensor<float>({count, G.config().latent_dim});
    s.images = generate(G, s.z, s.features);
    return s;
}

Samples sample_random_feature(Generator<float>& G, const FeatureStats& stats, int count, std::uint64_t seed)
{
    if (count < 1)
        throw Error("sample_random_feature: count must be >= 1");
    nn::Rng f_rng(nn::derive_seed(seed, "sampler.random.f"));
    nn::Rng z_rng(nn::derive_seed(seed, "sampler.random.z"));
    Samples s;
    s.features = f_rng.normal_tensor<float>({count, stats.class_means.cols()}, stats.global_std, stats.global_mean);
    s.z = z_rng.normal_tensor<float>({count, G.config().latent_dim});
    s.images = generate(G, s.z, s.features);
    return s;
}

Tensor<float> perturb_feature(const Tensor<float>& f, double eta, double sigma_F, nn::Rng& rng)
{
    if (eta < 0)
        throw Error("perturb_feature: eta must be >= 0");
    if (eta == 0)
        return f;
    Tensor<float> out = f;
    const double sd = eta * sigma_F;
    for (nn::Index i = 0; i < out.size(); ++i)
        out[i] += static_cast<float>(sd * rng.normal());
    return out;
}

namespace {

double spread(const Eigen::MatrixXf& rows)
{
    const Eigen::RowVectorXf mean = rows.colwise().mean();
    return (rows.rowwise() - mean).rowwise().squaredNorm().mean();
}

}  // namespace

InformationSplit information_split(Generator<float>& G, FeatureExtractor& F, const Tensor<float>& pool, int probes,
                                   int samples, std::uint64_t seed)
{
    const nn::Index P = pool.dim(0), d = pool.size() / std::max<nn::Index>(P, 1);
    if (P < 2 || samples < 2 || probes < 1)
        throw Error("information_split: need >= 2 pool features, >= 2 samples and >= 1 probe");
    nn::Rng rng(nn::derive_seed(seed, "sampler.split"));
    const nn::Index latent = G.config().latent_dim;
    InformationSplit out;
    out.probes = probes;
    for (int p = 0; p < probes; ++p) {
        // fixed f, varying z
        const nn::Index pick = static_cast<nn::Index>(rng.below(static_cast<std::size_t>(P)));
        Tensor<float> f_fixed(nn::Shape{samples, d});
        for (int s = 0; s < samples; ++s)
            f_fixed.array().segment(s * d, d) = pool.array().segment(pick * d, d);
        auto z_vary = rng.normal_tensor<float>({samples, latent});
        out.latent_variance += spread(as_rows(F.extract(generate(G, z_vary, f_fixed))));

        // fixed z, varying f
        auto z_one = rng.normal_tensor<float>({1, latent});
        Tensor<float> z_fixed(nn::Shape{samples, latent}), f_vary(nn::Shape{samples, d});
        std::vector<std::size_t> order(static_cast<std::size_t>(P));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (int s = 0; s < samples; ++s) {
            z_fixed.array().segment(s * latent, latent) = z_one.array();
            const auto src = static_cast<nn::Index>(order[static_cast<std::size_t>(s) % order.size()]);
            f_vary.array().segment(s * d, d) = pool.array().segment(src * d, d);
        }
        out.feature_variance += spread(as_rows(F.extract(generate(G, z_fixed, f_vary))));
    }
    out.latent_variance /= probes;
    out.feature_variance /= probes;
    out.variance_ratio = out.feature_variance > 0 ? out.latent_variance / out.feature_variance : 0.0;
    out.std_ratio = std::sqrt(out.variance_ratio);
    return out;
}

GanModels load_gan_for_sampling(const std::filesystem::path& path, bool allow_untrained)
{
    auto models = load_gan(load_checkpoint(path));
    if (models.iterations == 0 && !allow_untrained)
        throw Error("checkpoint '" + path.string() + "' is untrained (0 iterations); pass --allow-untrained to sample anyway");
    return models;
}

}  // namespace opengan

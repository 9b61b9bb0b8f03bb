#include "opengan/metric.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

namespace opengan {

using nn::Var;

FeatureExtractor::FeatureExtractor(const EncoderConfig& cfg, nn::Rng& rng) : encoder(cfg, rng) {}

Var<float> FeatureExtractor::forward(const Var<float>& images)
{
    return encoder.forward(images, !frozen_);
}

nn::Tensor<float> FeatureExtractor::extract(const nn::Tensor<float>& images, nn::Index chunk)
{
    nn::NoGradGuard guard;
    const nn::Index n = images.dim(0);
    nn::Tensor<float> out(nn::Shape{n, dim()});
    const nn::Index per = n ? images.size() / n : 0;
    for (nn::Index start = 0; start < n; start += chunk) {
        const nn::Index m = std::min(chunk, n - start);
        nn::Shape shape = images.shape();
        shape[0] = m;
        nn::Tensor<float> part(shape);
        part.array() = images.array().segment(start * per, m * per);
        // frozen-mode pass: no power-iteration or running-stat updates
        auto f = encoder.forward(Var<float>(std::move(part), false), false);
        out.array().segment(start * dim(), m * dim()) = f.value().array();
    }
    return out;
}

nn::Tensor<float> FeatureExtractor::extract(const Dataset& dataset, nn::Index chunk)
{
    std::vector<std::size_t> all(dataset.size());
    std::iota(all.begin(), all.end(), 0);
    return extract(dataset.stack(all), chunk);
}

void FeatureExtractor::freeze()
{
    registry().set_trainable(false);
    frozen_ = true;
}

CenterCache refresh_cache(FeatureExtractor& F, const Dataset& train, int epoch)
{
    CenterCache cache;
    cache.centres = as_rows(F.extract(train));
    cache.labels = train.labels;
    cache.epoch_of_last_refresh = epoch;
    return cache;
}

template <typename Scalar>
NcaResult<Scalar> nca_loss(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& batch,
                           const std::vector<int>& batch_labels, const std::vector<long>& self_rows,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& centres,
                           const std::vector<int>& centre_labels, Scalar sigma, UnmatchedPolicy policy)
{
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const auto B = batch.rows(), n = centres.rows();
    if (!(sigma > 0))
        throw Error("nca_loss: sigma must be positive");
    if (n == 0)
        throw Error("nca_loss: centre cache is empty");
    if (centres.cols() != batch.cols())
        throw Error("nca_loss: batch has " + std::to_string(batch.cols()) + " dims, centres have " +
                    std::to_string(centres.cols()));
    if (static_cast<Eigen::Index>(batch_labels.size()) != B || static_cast<Eigen::Index>(self_rows.size()) != B ||
        static_cast<Eigen::Index>(centre_labels.size()) != n)
        throw Error("nca_loss: label or self-row count does not match");

    NcaResult<Scalar> result;
    result.grad = NcaResult<Scalar>::Matrix::Zero(B, batch.cols());
    const Scalar inv_two_s2 = Scalar(1) / (2 * sigma * sigma);
    const Vector centre_sq = centres.rowwise().squaredNorm();
    Vector a(n), p(n), q(n);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto c = batch.row(i);
        a = -(centre_sq - 2 * centres * c.transpose()).array() - c.squaredNorm();
        a *= inv_two_s2;
        const long self = self_rows[static_cast<std::size_t>(i)];
        const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
        Scalar top = neg_inf, top_same = neg_inf;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == self)
                continue;
            top = std::max(top, a[k]);
            if (centre_labels[static_cast<std::size_t>(k)] == batch_labels[static_cast<std::size_t>(i)])
                top_same = std::max(top_same, a[k]);
        }
        if (top_same == neg_inf) {
            if (policy == UnmatchedPolicy::error)
                throw Error("nca_loss: batch item " + std::to_string(i) + " (class " +
                            std::to_string(batch_labels[static_cast<std::size_t>(i)]) +
                            ") has no other cached centre of its class");
            result.skipped.push_back(static_cast<std::size_t>(i));
            continue;
        }
        Scalar total = 0, same = 0;
        for (Eigen::Index k = 0; k < n; ++k) {
            p[k] = q[k] = 0;
            if (k == self)
                continue;
            p[k] = std::exp(a[k] - top);
            total += p[k];
            if (centre_labels[static_cast<std::size_t>(k)] == batch_labels[static_cast<std::size_t>(i)]) {
                q[k] = std::exp(a[k] - top_same);
                same += q[k];
            }
        }
        // -ln(same/total) in log-sum-exp form
        result.loss += (top + std::log(total)) - (top_same + std::log(same));
        p /= total;
        q /= same;
        result.grad.row(i) = ((p - q).transpose() * centres) / (sigma * sigma);
    }
    result.loss = std::max(result.loss, Scalar(0));
    return result;
}

template NcaResult<float> nca_loss(const Eigen::MatrixXf&, const std::vector<int>&, const std::vector<long>&,
                                   const Eigen::MatrixXf&, const std::vector<int>&, float, UnmatchedPolicy);
template NcaResult<double> nca_loss(const Eigen::MatrixXd&, const std::vector<int>&, const std::vector<long>&,
                                    const Eigen::MatrixXd&, const std::vector<int>&, double, UnmatchedPolicy);

Var<float> nca_loss_op(const Var<float>& features, const std::vector<int>& labels,
                       const std::vector<long>& self_rows, const CenterCache& cache, float sigma,
                       std::vector<std::size_t>* skipped)
{
    const Eigen::MatrixXf batch = as_rows(features.value());
    auto r = nca_loss<float>(batch, labels, self_rows, cache.centres, cache.labels, sigma, UnmatchedPolicy::skip);
    if (skipped)
        *skipped = r.skipped;
    nn::Tensor<float> out(nn::Shape{1}, r.loss);
    auto grad = std::make_shared<Eigen::MatrixXf>(std::move(r.grad));
    return nn::make_result<float>(std::move(out), {features}, [features, grad](const nn::Tensor<float>& g) {
        if (!features.requires_grad())
            return;
        auto& buf = features.grad_buffer();
        Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> view(
            buf.data(), grad->rows(), grad->cols());
        view += g[0] * *grad;
    });
}

void MetricTrainConfig::validate() const
{
    if (!(sigma > 0))
        throw Error("metric.sigma must be > 0");
    if (cache_refresh_period < 1)
        throw Error("metric.cache_refresh_period must be >= 1");
    if (epochs < 0)
        throw Error("metric.epochs must be >= 0");
    if (batch_size < 2)
        throw Error("metric.batch_size must be >= 2");
    if (!(learning_rate > 0))
        throw Error("metric.learning_rate must be > 0");
    if (encoder.output_dim < 1)
        throw Error("metric.dim must be >= 1");
}

MetricTrainResult train_metric(const Dataset& train, const MetricTrainConfig& cfg,
                               const std::function<void(const MetricEpochLog&)>& on_epoch)
{
    cfg.validate();
    std::size_t usable_classes = 0;
    for (const auto& members : train.class_index)
        usable_classes += members.size() >= 2;
    if (train.class_count() < 2 || usable_classes < 2)
        throw Error("train_metric needs at least 2 classes with at least 2 images each");
    if (train.image_size != cfg.encoder.resolution)
        throw Error("train_metric: dataset images are " + std::to_string(train.image_size) +
                    " px, encoder expects " + std::to_string(cfg.encoder.resolution));

    nn::Rng init_rng(nn::derive_seed(cfg.seed, "metric.init"));
    MetricTrainResult result{FeatureExtractor(cfg.encoder, init_rng), {}};
    FeatureExtractor& F = result.extractor;
    auto reg = F.registry();
    nn::Adam<float> adam(reg.vars(), {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8});

    const int batch_size = static_cast<int>(std::min<std::size_t>(cfg.batch_size, train.size()));
    BatchStream stream(train, batch_size, nn::derive_seed(cfg.seed, "metric.data"), cfg.augment);
    CenterCache cache;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        MetricEpochLog entry;
        entry.epoch = epoch;
        if (epoch % cfg.cache_refresh_period == 0) {
            cache = refresh_cache(F, train, epoch);
            entry.cache_refreshed = true;
        }
        double total = 0;
        std::size_t terms = 0;
        for (std::size_t b = 0; b < stream.batches_per_epoch(); ++b) {
            Batch batch = stream.next();
            std::vector<long> self(batch.indices.begin(), batch.indices.end());
            std::vector<std::size_t> skipped;
            adam.zero_grad();
            auto features = F.forward(Var<float>(std::move(batch.images), false));
            auto loss = nca_loss_op(features, batch.labels, self, cache, static_cast<float>(cfg.sigma), &skipped);
            if (!std::isfinite(loss.value()[0]))
                throw Error("train_metric: non-finite NCA loss at epoch " + std::to_string(epoch));
            nn::backward(loss);
            adam.step();
            total += loss.value()[0];
            terms += batch.labels.size() - skipped.size();
            entry.skipped += skipped.size();
        }
        if (entry.skipped)
            std::cerr << "warning: " << entry.skipped << " batch items without a same-class centre skipped in epoch "
                      << epoch << "\n";
        entry.mean_loss = terms ? total / static_cast<double>(terms) : 0.0;
        result.log.push_back(entry);
        if (on_epoch)
            on_epoch(entry);
    }
    F.freeze();
    return result;
}

RetrievalReport retrieval_recall(const Eigen::MatrixXf& features, const std::vector<int>& labels, int k)
{
    const auto n = features.rows();
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw Error("retrieval: label count does not match features");
    if (k < 1)
        throw Error("retrieval: k must be >= 1");
    std::map<int, std::size_t> class_sizes;
    for (int l : labels)
        ++class_sizes[l];
    const Eigen::VectorXf sq = features.rowwise().squaredNorm();
    const Eigen::MatrixXf gram = features * features.transpose();
    RetrievalReport report;
    std::size_t hits = 0;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::vector<float> dist(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        if (class_sizes[labels[static_cast<std::size_t>(i)]] < 2) {
            ++report.skipped;
            continue;
        }
        for (Eigen::Index j = 0; j < n; ++j)
            dist[static_cast<std::size_t>(j)] = sq[i] + sq[j] - 2 * gram(i, j);
        order.resize(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        order.erase(order.begin() + i);
        const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<long>(kk), order.end(),
                          [&](Eigen::Index a, Eigen::Index b) {
                              const auto da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
                              return da < db || (da == db && a < b);
                          });
        for (std::size_t r = 0; r < kk; ++r)
            if (labels[static_cast<std::size_t>(order[r])] == labels[static_cast<std::size_t>(i)]) {
                ++hits;
                break;
            }
        ++report.evaluated;
    }
    report.recall = report.evaluated ? static_cast<double>(hits) / static_cast<double>(report.evaluated) : 0.0;
    return report;
}

RetrievalReport retrieval_eval(FeatureExtractor& F, const Dataset& dataset, int k)
{
    return retrieval_recall(as_rows(F.extract(dataset)), dataset.labels, k);
}

double permutation_baseline(const Eigen::MatrixXf& features, const std::vector<int>& labels, int k, int trials,
                            std::uint64_t seed)
{
    if (trials < 1)
        throw Error("permutation_baseline: trials must be >= 1");
    nn::Rng rng(seed);
    std::vector<int> shuffled = labels;
    double total = 0;
    for (int t = 0; t < trials; ++t) {
        std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
        total += retrieval_recall(features, shuffled, k).recall;
    }
    return total / trials;
}

std::pair<double, double> intra_inter_distance(const Eigen::MatrixXf& features, const std::vector<int>& labels)
{
    double intra = 0, inter = 0;
    std::size_t n_intra = 0, n_inter = 0;
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        for (Eigen::Index j = i + 1; j < features.rows(); ++j) {
            const double d = (features.row(i) - features.row(j)).norm();
            if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    return {n_intra ? intra / static_cast<double>(n_intra) : 0.0, n_inter ? inter / static_cast<double>(n_inter) : 0.0};
}

Checkpoint metric_checkpoint(FeatureExtractor& F, const MetricTrainConfig& cfg, std::uint64_t split_hash,
                             const nlohmann::json& provenance)
{
    Checkpoint ckpt;
    const auto& e = F.config();
    ckpt.header = {
        {"kind", "metric"},
        {"encoder", {{"resolution", e.resolution}, {"base_channels", e.base_channels}, {"blocks", e.blocks},
                     {"output_dim", e.output_dim}}},
        {"d", e.output_dim},
        {"sigma", cfg.sigma},
        {"split_manifest_hash", nn::hex64(split_hash)},
        {"frozen", F.frozen()},
        {"provenance", provenance},
    };
    ckpt.store(F.registry(), "F.");
    return ckpt;
}

FeatureExtractor load_feature_extractor(const Checkpoint& ckpt)
{
    if (ckpt.header.value("kind", "") != "metric")
        throw Error("checkpoint is not a metric checkpoint (kind '" + ckpt.header.value("kind", "") + "')");
    const auto& e = ckpt.header.at("encoder");
    EncoderConfig cfg;
    cfg.resolution = e.at("resolution");
    cfg.base_channels = e.at("base_channels");
    cfg.blocks = e.at("blocks");
    cfg.output_dim = e.at("output_dim");
    nn::Rng rng(0);
    FeatureExtractor F(cfg, rng);
    ckpt.restore(F.registry(), "F.");
    F.freeze();
    return F;
}

}  // namespace opengan

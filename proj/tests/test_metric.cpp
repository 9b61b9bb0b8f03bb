#include "opengan/metric.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace opengan;
using Eigen::MatrixXd;

namespace {

struct Instance {
    MatrixXd batch, centres;
    std::vector<int> batch_labels, centre_labels;
    std::vector<long> self;
};

// Batch items are also cached (self rows), as during training.
Instance random_instance(nn::Rng& rng, int points, int dim)
{
    Instance in;
    in.batch.resize(points, dim);
    for (int i = 0; i < points; ++i) {
        for (int j = 0; j < dim; ++j)
            in.batch(i, j) = rng.normal();
        in.batch_labels.push_back(i % 2);
        in.self.push_back(i);
    }
    in.centres = in.batch + 0.1 * MatrixXd::Random(points, dim);
    in.centre_labels = in.batch_labels;
    return in;
}

double loss_of(const Instance& in, const MatrixXd& batch, double sigma)
{
    return nca_loss<double>(batch, in.batch_labels, in.self, in.centres, in.centre_labels, sigma).loss;
}

}  // namespace

TEST(Nca, HandEvaluatedExample)
{
    MatrixXd c(1, 1), cache(2, 1);
    c << 0;
    cache << 0, 1;
    const double sigma = std::sqrt(0.5);  // 2 sigma^2 = 1
    auto r = nca_loss<double>(c, {0}, {-1}, cache, {0, 1}, sigma);
    EXPECT_NEAR(r.loss, std::log(1 + std::exp(-1.0)), 1e-12);
    EXPECT_NEAR(r.loss, 0.3133, 1e-4);
}

TEST(Nca, AllSameClassGivesZero)
{
    nn::Rng rng(1);
    auto in = random_instance(rng, 5, 3);
    std::fill(in.batch_labels.begin(), in.batch_labels.end(), 4);
    std::fill(in.centre_labels.begin(), in.centre_labels.end(), 4);
    EXPECT_NEAR(loss_of(in, in.batch, 1.0), 0.0, 1e-12);
}

TEST(Nca, NonNegativeAndFiniteFarApart)
{
    nn::Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        auto in = random_instance(rng, 6, 4);
        in.centres *= 50;
        for (double sigma : {0.1, 1.0, 10.0}) {
            const double l = loss_of(in, in.batch, sigma);
            EXPECT_GE(l, 0.0);
            EXPECT_TRUE(std::isfinite(l));
        }
    }
}

TEST(Nca, GradientMatchesFiniteDifferences)
{
    nn::Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        auto in = random_instance(rng, 5, 4);
        for (double sigma : {0.5, 1.0, 10.0}) {
            const MatrixXd g = nca_loss<double>(in.batch, in.batch_labels, in.self, in.centres, in.centre_labels, sigma).grad;
            MatrixXd numeric(g.rows(), g.cols());
            const double h = 1e-6 * std::max(1.0, sigma);
            for (Eigen::Index i = 0; i < g.size(); ++i) {
                MatrixXd p = in.batch, m = in.batch;
                p(i) += h;
                m(i) -= h;
                numeric(i) = (loss_of(in, p, sigma) - loss_of(in, m, sigma)) / (2 * h);
            }
            const double scale = std::max({g.norm(), numeric.norm(), 1e-12});
            EXPECT_LT((g - numeric).norm() / scale, 1e-3) << "sigma " << sigma;
        }
    }
}

TEST(Nca, TranslationAndScaleInvariance)
{
    nn::Rng rng(4);
    auto in = random_instance(rng, 5, 4);
    const double base = loss_of(in, in.batch, 1.3);
    Eigen::RowVectorXd shift = Eigen::RowVectorXd::Random(4) * 7;
    Instance moved = in;
    moved.batch.rowwise() += shift;
    moved.centres.rowwise() += shift;
    EXPECT_NEAR(loss_of(moved, moved.batch, 1.3), base, 1e-6);
    Instance scaled = in;
    scaled.batch *= 3.5;
    scaled.centres *= 3.5;
    EXPECT_NEAR(loss_of(scaled, scaled.batch, 1.3 * 3.5), base, 1e-6);
}

TEST(Nca, UnmatchedItem)
{
    MatrixXd c(1, 2), cache(2, 2);
    c << 0, 0;
    cache << 1, 1, 2, 2;
    EXPECT_THROW(nca_loss<double>(c, {5}, {-1}, cache, {0, 1}, 1.0), Error);
    auto r = nca_loss<double>(c, {5}, {-1}, cache, {0, 1}, 1.0, UnmatchedPolicy::skip);
    EXPECT_EQ(r.skipped.size(), 1u);
    EXPECT_EQ(r.loss, 0.0);
    // singleton class: the only same-class centre is the item itself
    EXPECT_THROW(nca_loss<double>(c, {0}, {0}, cache, {0, 1}, 1.0), Error);
}

TEST(Retrieval, DuplicatesAndSkips)
{
    Eigen::MatrixXf f(5, 2);
    f << 0, 0, 0, 0, 5, 5, 5, 5, 9, 9;
    auto r = retrieval_recall(f, {0, 0, 1, 1, 2}, 1);
    EXPECT_EQ(r.evaluated, 4u);
    EXPECT_EQ(r.skipped, 1u);
    EXPECT_DOUBLE_EQ(r.recall, 1.0);
}

TEST(Retrieval, PermutationBaselineNearChance)
{
    nn::Rng rng(5);
    const int C = 4, per = 25;
    Eigen::MatrixXf f(C * per, 8);
    std::vector<int> labels;
    for (int i = 0; i < C * per; ++i) {
        labels.push_back(i % C);
        for (int j = 0; j < 8; ++j)
            f(i, j) = static_cast<float>(rng.normal());
    }
    const double chance = (per - 1.0) / (C * per - 1.0);
    EXPECT_NEAR(permutation_baseline(f, labels, 1, 200, 1), chance, 0.02);
}

namespace {

Dataset two_blobs(int per_class)
{
    // red squares on the left vs blue squares on the right, mild noise
    nn::Rng rng(9);
    Dataset ds;
    ds.image_size = 8;
    ds.class_names = {"a", "b"};
    for (int c = 0; c < 2; ++c)
        for (int k = 0; k < per_class; ++k) {
            Image img = Image::Constant(3 * 64, -0.6f);
            for (int y = 2; y < 6; ++y)
                for (int x = 0; x < 4; ++x)
                    img[(c * 2 * 8 + y) * 8 + x + 4 * c] = 0.8f;
            for (auto& v : img)
                v = std::clamp(v + static_cast<float>(0.1 * rng.normal()), -1.0f, 1.0f);
            ds.images.push_back(img);
            ds.labels.push_back(c);
            ds.ids.push_back(ds.class_names[static_cast<std::size_t>(c)] + std::to_string(k));
        }
    ds.rebuild_index();
    return ds;
}

MetricTrainConfig small_config()
{
    MetricTrainConfig cfg;
    cfg.encoder = {8, 4, 1, 8};
    cfg.sigma = 1.0;
    cfg.learning_rate = 3e-3;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.cache_refresh_period = 5;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST(MetricTraining, SeparatesTwoClasses)
{
    auto ds = two_blobs(12);
    std::vector<MetricEpochLog> seen;
    auto result = train_metric(ds, small_config(), [&](const MetricEpochLog& e) { seen.push_back(e); });
    ASSERT_EQ(result.log.size(), 20u);
    EXPECT_EQ(seen.size(), 20u);
    EXPECT_LT(result.log.back().mean_loss, result.log.front().mean_loss);
    for (const auto& e : result.log)
        EXPECT_EQ(e.cache_refreshed, e.epoch % 5 == 0);
    EXPECT_TRUE(result.extractor.frozen());
    auto f = as_rows(result.extractor.extract(ds));
    auto [intra, inter] = intra_inter_distance(f, ds.labels);
    EXPECT_LT(intra, inter);
}

TEST(MetricTraining, ZeroEpochsReturnsInitialisation)
{
    auto cfg = small_config();
    cfg.epochs = 0;
    auto ds = two_blobs(4);
    auto result = train_metric(ds, cfg);
    nn::Rng rng(nn::derive_seed(cfg.seed, "metric.init"));
    FeatureExtractor fresh(cfg.encoder, rng);
    EXPECT_EQ(result.extractor.hash(), fresh.hash());
    EXPECT_TRUE(result.log.empty());
}

TEST(MetricTraining, RejectsDegenerateData)
{
    auto ds = two_blobs(4);
    auto one = ds.subset({0, 1, 2, 3});
    EXPECT_THROW(train_metric(one, small_config()), Error);
    auto cfg = small_config();
    cfg.sigma = 0;
    EXPECT_THROW(train_metric(ds, cfg), Error);
}

TEST(FeatureExtractor, ShapesDeterminismAndCache)
{
    nn::Rng rng(1);
    FeatureExtractor F({8, 4, 1, 512}, rng);
    auto ds = two_blobs(3);
    auto f = F.extract(ds);
    EXPECT_EQ(f.shape(), (nn::Shape{6, 512}));
    EXPECT_TRUE((F.extract(ds).array() == f.array()).all());
    auto a = refresh_cache(F, ds), b = refresh_cache(F, ds);
    EXPECT_EQ(a.centres, b.centres);
    EXPECT_EQ(a.labels, ds.labels);
    auto w = F.registry().params().front().var;
    w.mutable_value().array() += 0.5f;
    auto c = refresh_cache(F, ds);
    EXPECT_NE(a.centres, c.centres);
    nn::Tensor<float> wrong(nn::Shape{1, 3, 16, 16});
    EXPECT_THROW(F.extract(wrong), Error);
}

TEST(FeatureExtractor, FrozenPassesGradientToInputOnly)
{
    nn::Rng rng(2);
    FeatureExtractor F({8, 4, 1, 6}, rng);
    F.freeze();
    nn::Var<float> x(rng.normal_tensor<float>({2, 3, 8, 8}), true);
    nn::backward(nn::sum(F.forward(x)));
    EXPECT_GT(x.grad().array().abs().sum(), 0.0f);
    for (const auto& p : F.registry().params())
        EXPECT_FALSE(p.var.requires_grad());
}

TEST(FeatureExtractor, CheckpointRoundTrip)
{
    auto ds = two_blobs(3);
    auto cfg = small_config();
    cfg.epochs = 2;
    auto result = train_metric(ds, cfg);
    auto path = std::filesystem::temp_directory_path() / "opengan_metric_ckpt.bin";
    save_checkpoint(path, metric_checkpoint(result.extractor, cfg, 42));
    auto loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.header["d"], 8);
    EXPECT_EQ(loaded.header["sigma"], 1.0);
    auto F = load_feature_extractor(loaded);
    EXPECT_TRUE(F.frozen());
    EXPECT_EQ(F.hash(), result.extractor.hash());
    EXPECT_TRUE((F.extract(ds).array() == result.extractor.extract(ds).array()).all());
}

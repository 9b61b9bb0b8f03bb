#include "oracles.hpp"

#include "opengan/evaluation.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace opengan;

namespace {

GaussianMoments<double> make(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov)
{
    return {mean, cov, 100};
}

Eigen::MatrixXf gaussian_cloud(int n, int d, float offset, nn::Rng& rng)
{
    Eigen::MatrixXf m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m(i) = static_cast<float>(rng.normal()) + offset;
    return m;
}

}  // namespace

TEST(Frechet, IdenticalIsZeroAndOneDimensionalCase)
{
    nn::Rng rng(1);
    auto cov = oracle::random_psd(4, 4, rng);
    Eigen::VectorXd mu = Eigen::VectorXd::Random(4);
    EXPECT_NEAR(frechet_distance(make(mu, cov), make(mu, cov)), 0.0, 1e-10);

    Eigen::VectorXd m0(1), m1(1);
    m0 << 0;
    m1 << 1;
    Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
    EXPECT_DOUBLE_EQ(frechet_distance(make(m0, one), make(m1, one)), 1.0);
}

TEST(Frechet, MatchesGeneralEigenOracle)
{
    nn::Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const Eigen::Index d = 4;
        auto sa = oracle::random_psd(d, 1 + t % 6, rng), sb = oracle::random_psd(d, 1 + (t / 2) % 6, rng);
        Eigen::VectorXd ma = Eigen::VectorXd::Random(d), mb = Eigen::VectorXd::Random(d);
        const double ours = frechet_distance(make(ma, sa), make(mb, sb));
        EXPECT_NEAR(ours, std::max(0.0, oracle::frechet(ma, sa, mb, sb)), 1e-6) << "case " << t;
        EXPECT_NEAR(ours, frechet_distance(make(mb, sb), make(ma, sa)), 1e-6);
        EXPECT_GE(ours, 0.0);
    }
}

TEST(Frechet, Errors)
{
    Eigen::VectorXd a = Eigen::VectorXd::Zero(2), b = Eigen::VectorXd::Zero(3);
    EXPECT_THROW(frechet_distance(make(a, Eigen::MatrixXd::Identity(2, 2)), make(b, Eigen::MatrixXd::Identity(3, 3))),
                 Error);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
    bad(0, 0) = std::nan("");
    EXPECT_THROW(frechet_distance(make(a, bad), make(a, bad)), Error);
    EXPECT_THROW(gaussian_moments<double>(Eigen::MatrixXd::Zero(1, 3)), Error);
}

TEST(Fid, SelfZeroSymmetricOrderInvariantAndMonotone)
{
    nn::Rng rng(3);
    auto x = gaussian_cloud(200, 5, 0, rng);
    EXPECT_NEAR(fid_from_features(x, x), 0.0, 1e-6);
    auto y = gaussian_cloud(150, 5, 0.5f, rng);
    EXPECT_NEAR(fid_from_features(x, y), fid_from_features(y, x), 1e-6);
    Eigen::MatrixXf reversed = x.colwise().reverse();
    EXPECT_NEAR(fid_from_features(reversed, y), fid_from_features(x, y), 1e-6);
    double prev = 0;
    for (float sep : {1.0f, 2.0f, 4.0f, 8.0f}) {
        Eigen::MatrixXf shifted = x.array() + sep;
        const double d = fid_from_features(x, shifted);
        EXPECT_GT(d, prev);
        prev = d;
    }
}

TEST(IntraFid, HandComputedCases)
{
    nn::Rng rng(4);
    auto a = gaussian_cloud(50, 3, 0, rng), b = gaussian_cloud(50, 3, 0, rng), c = gaussian_cloud(40, 3, 2, rng);
    auto single = intra_fid({{"a", {a, c}}});
    EXPECT_NEAR(single.mean, fid_from_features(a, c), 1e-12);
    auto two = intra_fid({{"a", {a, a}}, {"b", {b, c}}});
    EXPECT_NEAR(two.mean, 0.5 * fid_from_features(b, c), 1e-9);
    auto skipped = intra_fid({{"a", {a, a}}, {"tiny", {a.topRows(1), a.topRows(1)}}});
    EXPECT_EQ(skipped.skipped, std::vector<std::string>{"tiny"});
    EXPECT_EQ(skipped.classes.size(), 1u);
}

TEST(FeatureMatch, MatchedAndDeranged)
{
    nn::Rng rng(5);
    auto f = gaussian_cloud(64, 8, 0, rng);
    auto same = feature_match_from_features(f, f, 1);
    EXPECT_EQ(same.matched_mse, 0.0);
    EXPECT_GT(same.baseline_mse, 0.0);
    // unrelated outputs: matched and deranged errors agree in expectation
    auto noise = gaussian_cloud(64, 8, 0, rng);
    auto r = feature_match_from_features(f, noise, 2);
    EXPECT_NEAR(r.matched_mse / r.baseline_mse, 1.0, 0.25);
    auto lone = feature_match_from_features(f.topRows(1), f.topRows(1), 1);
    EXPECT_TRUE(std::isnan(lone.baseline_mse));

    for (std::size_t n : {2u, 3u, 10u}) {
        auto p = random_derangement(n, rng);
        for (std::size_t i = 0; i < n; ++i)
            EXPECT_NE(p[i], i);
    }
}

TEST(Embeddings, ExportRoundTripsAndIsStable)
{
    nn::Rng rng(6);
    FeatureExtractor F({8, 4, 1, 5}, rng);
    F.freeze();
    Dataset ds;
    ds.image_size = 8;
    ds.class_names = {"p", "q"};
    for (int i = 0; i < 4; ++i) {
        ds.images.push_back((Eigen::ArrayXf::Random(192) * 0.9f).eval());
        ds.labels.push_back(i % 2);
        ds.ids.push_back("item" + std::to_string(i));
    }
    ds.rebuild_index();
    auto dir = std::filesystem::temp_directory_path();
    export_embeddings(F, ds, dir / "opengan_emb_a.tsv");
    export_embeddings(F, ds, dir / "opengan_emb_b.tsv");
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    };
    EXPECT_EQ(slurp(dir / "opengan_emb_a.tsv"), slurp(dir / "opengan_emb_b.tsv"));
    auto records = read_embeddings(dir / "opengan_emb_a.tsv");
    ASSERT_EQ(records.size(), 4u);
    auto f = as_rows(F.extract(ds));
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(records[i].id, ds.ids[i]);
        EXPECT_EQ(records[i].label, ds.class_names[static_cast<std::size_t>(ds.labels[i])]);
        for (int j = 0; j < 5; ++j)
            EXPECT_EQ(records[i].values[static_cast<std::size_t>(j)], f(static_cast<Eigen::Index>(i), j));
    }
}

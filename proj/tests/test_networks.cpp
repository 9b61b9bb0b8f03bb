#include "gradcheck.hpp"
#include "oracles.hpp"

#include "opengan/networks.hpp"
#include "opengan/spectral_norm.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace opengan;
using namespace opengan::testing;
using nn::Shape;
using nn::Tensor;

namespace {

NetworkConfig tiny_config()
{
    NetworkConfig c;
    c.latent_dim = 6;
    c.base_channels = 2;
    c.resolution = 16;
    c.residual_blocks = 2;
    c.embedding_dim = 5;
    c.norm_mode = NormMode::instance;
    return c;
}

template <typename S>
nn::Var<S> constant(Shape shape, S value)
{
    Tensor<S> t(std::move(shape));
    t.array().setConstant(value);
    return nn::Var<S>(t, false);
}

}  // namespace

TEST(SpectralNorm, DiagonalExample)
{
    Eigen::MatrixXd w = Eigen::Vector2d(3, 1).asDiagonal();
    const Eigen::MatrixXd out = spectral_normalize(w, 50);
    EXPECT_NEAR(out(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(out(1, 1), 1.0 / 3.0, 1e-12);
    EXPECT_EQ(out(0, 1), 0.0);
}

TEST(SpectralNorm, OrthogonalUnchanged)
{
    nn::Rng rng(3);
    const auto q = nn::orthogonal_init<double>(Shape{6, 6}, rng);
    const Eigen::MatrixXd w = q.matrix(6, 6);
    EXPECT_LT((spectral_normalize(w, 50) - w).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SpectralNorm, ZeroMatrixGuarded)
{
    const Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 4);
    const Eigen::MatrixXd out = spectral_normalize(w, 10);
    EXPECT_TRUE(out.isZero());
}

TEST(SpectralNorm, RandomMatricesAgainstSvd)
{
    nn::Rng rng(42);
    for (int i = 0; i < 50; ++i) {
        const int rows = 8 + static_cast<int>(rng.below(57)), cols = 8 + static_cast<int>(rng.below(121));
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index k = 0; k < w.size(); ++k)
            w.data()[k] = rng.normal() * (0.1 + 3 * rng.uniform());
        const double s = oracle::largest_singular_value(spectral_normalize(w, 200, 1e-10));
        EXPECT_GE(s, 0.99) << rows << "x" << cols;
        EXPECT_LE(s, 1.01) << rows << "x" << cols;
    }
    Eigen::MatrixXd big(64, 128);
    for (Eigen::Index k = 0; k < big.size(); ++k)
        big.data()[k] = rng.normal();
    const double s = oracle::largest_singular_value(spectral_normalize(big, 200, 1e-10));
    EXPECT_GE(s, 0.99);
    EXPECT_LE(s, 1.01);
}

TEST(SpectralNorm, LayerConvergesWithTrainingPasses)
{
    nn::Rng rng(5);
    nn::Var<double> w(rng.normal_tensor<double>(Shape{16, 3, 3, 3}, 2.0), true);
    nn::SpectralState<double> state;
    state.u = Eigen::ArrayXd::Ones(16) / 4.0;
    state.v = Eigen::ArrayXd::Zero(27);
    nn::Var<double> out;
    for (int i = 0; i < 100; ++i)
        out = nn::spectral_weight(w, state, true);
    const double s = oracle::largest_singular_value(Eigen::MatrixXd(out.value().matrix(16, 27)));
    EXPECT_GE(s, 0.99);
    EXPECT_LE(s, 1.01);
    // evaluation mode reuses the stored vectors
    auto again = nn::spectral_weight(w, state, false);
    EXPECT_TRUE(again.value().array().isApprox(nn::spectral_weight(w, state, false).value().array()));
}

TEST(CondNorm, IdentityAffineGivesStandardized)
{
    nn::Rng rng(1);
    CondNorm<double> norm(3, 4, 4, NormMode::batch, rng);
    norm.project.weight.mutable_value().array().setZero();
    auto x = random_var({2, 3, 4, 4}, rng, false, 2.0);
    auto e = random_var({2, 4}, rng, false);
    const auto y = norm.forward(x, e, true);
    const auto xhat = nn::standardize(x, NormMode::batch, 1e-5, true);
    EXPECT_LT((y.value().array() - xhat.value().array()).abs().maxCoeff(), 1e-12);
}

TEST(CondNorm, ZeroGammaGivesAlpha)
{
    nn::Rng rng(2);
    CondNorm<double> norm(3, 4, 4, NormMode::instance, rng);
    norm.project.weight.mutable_value().array().setZero();
    auto& b = norm.project.bias.mutable_value().array();
    b.head(3).setZero();
    b.tail(3) << 0.5, -1.0, 2.0;
    auto x = random_var({2, 3, 4, 4}, rng, false);
    const auto y = norm.forward(x, random_var({2, 4}, rng, false), true);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            EXPECT_TRUE((y.value().array().segment((n * 3 + c) * 16, 16) == b[3 + c]).all());
}

TEST(CondNorm, OutputMomentsFollowGammaAlpha)
{
    nn::Rng rng(3);
    CondNorm<double> norm(2, 3, 3, NormMode::batch, rng);
    auto x = random_var({8, 2, 5, 5}, rng, false, 3.0);
    auto e = random_var({1, 3}, rng, false);
    const auto [gamma, alpha] = norm.scale_bias(e);
    const auto y = norm.forward(x, e, true);
    for (int c = 0; c < 2; ++c) {
        Eigen::ArrayXd vals(8 * 25);
        for (int n = 0; n < 8; ++n)
            vals.segment(n * 25, 25) = y.value().array().segment((n * 2 + c) * 25, 25);
        const double mean = vals.mean();
        const double sd = std::sqrt((vals - mean).square().mean());
        EXPECT_NEAR(mean, alpha.value()[c], 1e-6);
        EXPECT_NEAR(sd, std::abs(gamma.value()[c]), 1e-4);
    }
}

TEST(CondNorm, SharedEmbeddingMatchesRepeatedRows)
{
    nn::Rng rng(4);
    CondNorm<double> norm(2, 3, 3, NormMode::instance, rng);
    auto x = random_var({3, 2, 2, 2}, rng, false);
    auto e = random_var({1, 3}, rng, false);
    Tensor<double> rep(Shape{3, 3});
    for (int i = 0; i < 3; ++i)
        rep.matrix(3, 3).row(i) = e.value().matrix(1, 3).row(0);
    const auto a = norm.forward(x, e, true), b = norm.forward(x, nn::Var<double>(rep, false), true);
    EXPECT_LT((a.value().array() - b.value().array()).abs().maxCoeff(), 1e-15);
    EXPECT_THROW(norm.forward(x, random_var({2, 3}, rng, false), true), Error);
    EXPECT_THROW(norm.forward(random_var({3, 5, 2, 2}, rng, false), e, true), Error);
}

TEST(CondNorm, ContinuousInEmbedding)
{
    nn::Rng rng(5);
    CondNorm<double> norm(3, 4, 4, NormMode::instance, rng);
    auto x = random_var({2, 3, 4, 4}, rng, false);
    auto e = random_var({2, 4}, rng, false);
    const auto dir = rng.normal_tensor<double>(Shape{2, 4});
    const auto base = norm.forward(x, e, true).value();
    double previous = 1e300;
    for (double step : {1e-1, 1e-2, 1e-3, 1e-4}) {
        Tensor<double> moved = e.value();
        moved.array() += step * dir.array();
        const double change = (norm.forward(x, nn::Var<double>(moved, false), true).value().array() - base.array())
                                  .abs()
                                  .maxCoeff();
        EXPECT_LT(change, previous);
        EXPECT_LT(change, 50 * step);
        previous = change;
    }
}

TEST(CondNorm, Gradients)
{
    nn::Rng rng(6);
    for (auto mode : {NormMode::batch, NormMode::instance}) {
        CondNorm<double> norm(2, 3, 3, mode, rng);
        auto x = random_var({3, 2, 3, 3}, rng);
        auto e = random_var({3, 3}, rng);
        std::vector<VarD> inputs{x, e};
        nn::ParamRegistry<double> reg;
        norm.collect(reg, "n");
        for (const auto& v : reg.vars())
            inputs.push_back(v);
        EXPECT_LT(max_grad_error(inputs, [&] { return probe(norm.forward(x, e, true)); }), 1e-5);
    }
}

TEST(CondNorm, ClassConditionalRejectsUnknownClass)
{
    nn::Rng rng(7);
    ClassCondNorm<double> norm({0, 3, 5}, 2, 4, NormMode::instance, rng);
    auto x = random_var({2, 2, 2, 2}, rng, false);
    EXPECT_TRUE(norm.knows(3));
    EXPECT_FALSE(norm.knows(8));
    EXPECT_NO_THROW(norm.forward(x, std::vector<int>{0, 5}, true));
    EXPECT_THROW(norm.forward(x, std::vector<int>{0, 8}, true), Error);
    EXPECT_THROW(norm.scale_bias(8), Error);
}

TEST(Networks, DeskShapes)
{
    nn::Rng rng(8);
    NetworkConfig cfg;
    cfg.base_channels = 4;
    cfg.embedding_dim = 16;
    Generator<float> G(cfg, rng);
    Discriminator<float> D(cfg, rng);
    nn::NoGradGuard guard;
    auto z = nn::Var<float>(rng.normal_tensor<float>(Shape{2, 128}));
    auto f = nn::Var<float>(rng.normal_tensor<float>(Shape{2, 16}));
    const auto x = G.forward(z, f, false);
    EXPECT_EQ(x.shape(), (Shape{2, 3, 32, 32}));
    const auto d = D.forward(x, f, false);
    EXPECT_EQ(d.shape(), (Shape{2, 1}));
    EXPECT_TRUE(d.value().array().isFinite().all());

    NetworkConfig bad = cfg;
    bad.resolution = 24;
    EXPECT_THROW(bad.validate(), Error);
    bad = cfg;
    bad.residual_blocks = 2;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Networks, DiscriminatorBatchOf48)
{
    nn::Rng rng(9);
    auto cfg = tiny_config();
    Discriminator<float> D(cfg, rng);
    nn::NoGradGuard guard;
    auto x = nn::Var<float>(rng.normal_tensor<float>(Shape{48, 3, 16, 16}));
    auto f = nn::Var<float>(rng.normal_tensor<float>(Shape{48, 5}));
    EXPECT_EQ(D.forward(x, f, true).shape(), (Shape{48, 1}));
}

TEST(Networks, TanhRangeForExtremeInputs)
{
    nn::Rng rng(10);
    auto cfg = tiny_config();
    Generator<float> G(cfg, rng);
    nn::NoGradGuard guard;
    for (float scale : {1.0f, 1e3f, 1e6f}) {
        auto z = nn::Var<float>(rng.normal_tensor<float>(Shape{4, 6}, scale));
        auto f = nn::Var<float>(rng.normal_tensor<float>(Shape{4, 5}, scale));
        for (bool training : {true, false}) {
            const auto& x = G.forward(z, f, training).value().array();
            EXPECT_TRUE(x.isFinite().all()) << scale;
            EXPECT_LE(x.abs().maxCoeff(), 1.0f) << scale;
        }
    }
}

TEST(Networks, ResBlockScaleFactors)
{
    nn::Rng rng(11);
    ResBlockUp<double> up(4, 2, 3, NormMode::instance, rng);
    ResBlockDown<double> down(2, 4, true, rng);
    auto x = random_var({2, 4, 8, 8}, rng, false);
    auto f = random_var({2, 3}, rng, false);
    EXPECT_EQ(up.forward(x, f, false).shape(), (Shape{2, 2, 16, 16}));
    auto y = random_var({2, 2, 16, 16}, rng, false);
    EXPECT_EQ(down.forward(y, false).shape(), (Shape{2, 4, 8, 8}));
    EXPECT_THROW(up.forward(y, f, false), Error);
}

TEST(Networks, ZeroResidualBranchLeavesProjectedSkip)
{
    nn::Rng rng(12);
    ResBlockUp<double> up(4, 2, 3, NormMode::instance, rng);
    up.conv2.weight.mutable_value().array().setZero();
    up.conv2.bias.mutable_value().array().setZero();
    auto x = random_var({2, 4, 4, 4}, rng, false);
    auto f = random_var({2, 3}, rng, false);
    const auto out = up.forward(x, f, false);
    const auto skip = up.skip.forward(nn::upsample_nearest2x(x), false);
    EXPECT_LT((out.value().array() - skip.value().array()).abs().maxCoeff(), 1e-12);

    ResBlockDown<double> down(2, 3, true, rng);
    down.conv2.weight.mutable_value().array().setZero();
    down.conv2.bias.mutable_value().array().setZero();
    auto y = random_var({2, 2, 4, 4}, rng, false);
    const auto pooled = nn::avg_pool2x(down.skip.forward(y, false));
    EXPECT_LT((down.forward(y, false).value().array() - pooled.value().array()).abs().maxCoeff(), 1e-12);
}

TEST(Networks, AttentionIdentityAtInit)
{
    nn::Rng rng(13);
    nn::SelfAttention<double> attn(8, rng);
    auto x = random_var({2, 8, 4, 4}, rng, false);
    EXPECT_TRUE((attn.forward(x, true).value().array() == x.value().array()).all());
    const auto w = attn.weights(x);
    for (nn::Index r = 0; r < 2 * 16; ++r)
        EXPECT_NEAR(w.array().segment(r * 16, 16).sum(), 1.0, 1e-5);
}

TEST(Networks, AttentionPermutationEquivariant)
{
    nn::Rng rng(14);
    nn::SelfAttention<double> attn(8, rng);
    attn.gate.mutable_value()[0] = 0.7;
    auto x = random_var({1, 8, 3, 4}, rng, false);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    auto permute = [&](const Tensor<double>& t) {
        Tensor<double> out(t.shape());
        for (int c = 0; c < 8; ++c)
            for (int p = 0; p < 12; ++p)
                out[c * 12 + p] = t[c * 12 + perm[static_cast<std::size_t>(p)]];
        return out;
    };
    const auto a = permute(attn.forward(x, false).value());
    const auto b = attn.forward(nn::Var<double>(permute(x.value()), false), false).value();
    EXPECT_LT((a.array() - b.array()).abs().maxCoeff(), 1e-12);
}

TEST(Networks, GoldenManifest)
{
    NetworkConfig cfg;  // reference layout at 32x32, base 32
    nn::Rng a(1), b(2);
    Generator<float> g1(cfg, a), g2(cfg, b);
    const auto m = g1.manifest();
    EXPECT_EQ(m, g2.manifest());
    EXPECT_EQ(m.front(), "G.linear.weight [4096,128]");
    EXPECT_NE(std::find(m.begin(), m.end(), "G.up0.conv1.weight [128,256,3,3]"), m.end());
    EXPECT_NE(std::find(m.begin(), m.end(), "G.up2.conv2.weight [32,32,3,3]"), m.end());
    EXPECT_NE(std::find(m.begin(), m.end(), "G.attention.gate [1]"), m.end());
    EXPECT_NE(std::find(m.begin(), m.end(), "G.to_rgb.weight [3,32,3,3]"), m.end());
    EXPECT_EQ(m.size(), 101u);
    Discriminator<float> d1(cfg, a), d2(cfg, b);
    EXPECT_EQ(d1.manifest(), d2.manifest());
    EXPECT_EQ(d1.manifest().front(), "D.conv_in.weight [32,3,3,3]");
    const auto dm = d1.manifest();
    EXPECT_NE(std::find(dm.begin(), dm.end(), "D.head.weight [1,4096]"), dm.end());
    EXPECT_NE(std::find(dm.begin(), dm.end(), "D.down2.conv2.weight [256,256,3,3]"), dm.end());
    EXPECT_EQ(g1.registry().parameter_count(), g2.registry().parameter_count());
}

TEST(Networks, AttentionPlacementAtQuarterResolution)
{
    NetworkConfig cfg;
    EXPECT_EQ(cfg.generator_attention_block(), 0);      // 8x8 output of 32
    EXPECT_EQ(cfg.discriminator_attention_block(), 1);  // 8x8 output of 32
    cfg.residual_blocks = 6;
    cfg.resolution = 256;
    EXPECT_EQ(cfg.generator_attention_block(), 3);      // 64x64 output of 256
    EXPECT_EQ(cfg.discriminator_attention_block(), 1);  // 64x64
}

TEST(Networks, EveryParameterReceivesGradient)
{
    nn::Rng rng(15);
    auto cfg = tiny_config();
    cfg.norm_mode = NormMode::batch;
    Generator<double> G(cfg, rng);
    Discriminator<double> D(cfg, rng);
    // open the gates so the attention branch is in the graph with non-zero weight
    G.attention.gate.mutable_value()[0] = 0.5;
    D.attention.gate.mutable_value()[0] = 0.5;
    auto z = random_var({4, 6}, rng, false);
    auto f = random_var({4, 5}, rng, false);
    auto out = nn::mean(D.forward(G.forward(z, f, true), f, true));
    nn::backward(out);
    for (auto reg : {G.registry(), D.registry()})
        for (const auto& p : reg.params()) {
            // softmax over keys ignores a constant shift, so the key bias gradient is zero by construction
            if (p.name.find("attention.key.bias") != std::string::npos)
                continue;
            EXPECT_GT(p.var.grad().array().abs().maxCoeff(), 0.0) << p.name;
        }

    // gate itself gets gradient from a closed start
    Generator<double> G0(cfg, rng);
    nn::backward(nn::mean(G0.forward(z, f, true)));
    EXPECT_NE(G0.attention.gate.grad()[0], 0.0);
}

TEST(Networks, EncoderShapes)
{
    nn::Rng rng(16);
    ConvEncoder<float> enc({16, 4, 2, 7}, rng);
    nn::NoGradGuard guard;
    auto x = nn::Var<float>(rng.normal_tensor<float>(Shape{3, 3, 16, 16}));
    EXPECT_EQ(enc.forward(x, false).shape(), (Shape{3, 7}));
    EXPECT_THROW(enc.forward(nn::Var<float>(rng.normal_tensor<float>(Shape{3, 3, 8, 8})), false), Error);
}

TEST(Networks, DiscriminatorDependsOnEmbedding)
{
    nn::Rng rng(17);
    auto cfg = tiny_config();
    Discriminator<double> D(cfg, rng);
    auto x = random_var({1, 3, 16, 16}, rng, false);
    const double a = D.forward(x, random_var({1, 5}, rng, false), false).value()[0];
    const double b = D.forward(x, random_var({1, 5}, rng, false), false).value()[0];
    EXPECT_NE(a, b);
}

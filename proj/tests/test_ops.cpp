#include "gradcheck.hpp"

#include "opengan/nn/layers.hpp"

#include <gtest/gtest.h>

using namespace opengan;
using namespace opengan::testing;
using nn::Shape;

namespace {
constexpr double kTol = 1e-6;
}

TEST(Ops, ElementwiseGradients)
{
    nn::Rng rng(1);
    auto a = random_var({2, 3}, rng), b = random_var({2, 3}, rng);
    EXPECT_LT(max_grad_error({a, b}, [&] { return probe(nn::mul(nn::add(a, b), nn::sub(a, b))); }), kTol);
    EXPECT_LT(max_grad_error({a}, [&] { return probe(nn::tanh(nn::scale(nn::add_scalar(a, 0.3), 1.7))); }), kTol);
    EXPECT_LT(max_grad_error({a}, [&] { return probe(nn::relu(a)); }), kTol);
    EXPECT_LT(max_grad_error({a}, [&] { return nn::mean_row_sq_norm(a); }), kTol);
    EXPECT_LT(max_grad_error({a}, [&] { return nn::mean(nn::reshape(a, Shape{3, 2})); }), kTol);
}

TEST(Ops, LinearAndConvGradients)
{
    nn::Rng rng(2);
    auto x = random_var({3, 4}, rng), w = random_var({5, 4}, rng), b = random_var({5}, rng);
    EXPECT_LT(max_grad_error({x, w, b}, [&] { return probe(nn::linear(x, w, b)); }), kTol);

    auto img = random_var({2, 3, 5, 4}, rng);
    auto k3 = random_var({4, 3, 3, 3}, rng), cb = random_var({4}, rng);
    EXPECT_LT(max_grad_error({img, k3, cb}, [&] { return probe(nn::conv2d(img, k3, cb, 1)); }), kTol);
    auto k1 = random_var({2, 3, 1, 1}, rng);
    EXPECT_LT(max_grad_error({img, k1}, [&] { return probe(nn::conv2d(img, k1, VarD(), 0)); }), kTol);
    auto k4 = random_var({1, 3, 4, 4}, rng);
    auto square = random_var({2, 3, 4, 4}, rng);
    auto valid = nn::conv2d(square, k4, VarD(), 0);
    EXPECT_EQ(valid.shape(), (Shape{2, 1, 1, 1}));
}

TEST(Ops, ConvMatchesDirectSum)
{
    nn::Rng rng(3);
    auto x = random_var({1, 2, 4, 4}, rng, false), w = random_var({1, 2, 3, 3}, rng, false);
    auto y = nn::conv2d(x, w, VarD(), 1);
    // output (1,2): sum over c, ky, kx of w * x[y+ky-1, x+kx-1]
    double expect = 0;
    for (int c = 0; c < 2; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const int iy = 1 + ky - 1, ix = 2 + kx - 1;
                if (ix < 4)
                    expect += w.value()[(c * 3 + ky) * 3 + kx] * x.value()[(c * 4 + iy) * 4 + ix];
            }
    EXPECT_NEAR(y.value()[1 * 4 + 2], expect, 1e-12);
}

TEST(Ops, ResamplingShapesAndGradients)
{
    nn::Rng rng(4);
    auto x = random_var({2, 3, 8, 8}, rng);
    EXPECT_EQ(nn::upsample_nearest2x(x).shape(), (Shape{2, 3, 16, 16}));
    EXPECT_EQ(nn::avg_pool2x(x).shape(), (Shape{2, 3, 4, 4}));
    EXPECT_LT(max_grad_error({x}, [&] { return probe(nn::upsample_nearest2x(x)); }), kTol);
    EXPECT_LT(max_grad_error({x}, [&] { return probe(nn::avg_pool2x(x)); }), kTol);
    EXPECT_LT(max_grad_error({x}, [&] { return probe(nn::global_avg_pool(x)); }), kTol);
    auto odd = random_var({1, 1, 3, 4}, rng);
    EXPECT_THROW(nn::avg_pool2x(odd), Error);
}

TEST(Ops, StandardizeGradientsBothModes)
{
    nn::Rng rng(5);
    auto x = random_var({3, 2, 3, 3}, rng);
    for (auto mode : {nn::NormMode::batch, nn::NormMode::instance}) {
        EXPECT_LT(max_grad_error({x}, [&] { return probe(nn::standardize(x, mode, 1e-5, true)); }), 1e-5);
    }
    nn::RunningStats<double> stats;
    stats.mean = Eigen::ArrayXd::Constant(2, 0.2);
    stats.var = Eigen::ArrayXd::Constant(2, 1.5);
    EXPECT_LT(max_grad_error({x}, [&] {
        return probe(nn::standardize(x, nn::NormMode::batch, 1e-5, false, &stats));
    }), kTol);
}

TEST(Ops, StandardizeMoments)
{
    nn::Rng rng(6);
    auto x = random_var({4, 3, 5, 5}, rng, false, 3.0);
    auto y = nn::standardize(x, nn::NormMode::batch, 1e-5, true);
    for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        for (int n = 0; n < 4; ++n)
            for (int i = 0; i < 25; ++i) {
                const double v = y.value()[(n * 3 + c) * 25 + i];
                s += v;
                s2 += v * v;
            }
        EXPECT_LT(std::abs(s / 100), 1e-4);
        EXPECT_NEAR(s2 / 100, 1.0, 1e-3);
    }
    auto yi = nn::standardize(x, nn::NormMode::instance, 1e-5, true);
    for (int p = 0; p < 12; ++p) {
        const auto seg = yi.value().array().segment(p * 25, 25);
        EXPECT_LT(std::abs(seg.mean()), 1e-4);
        EXPECT_NEAR(seg.square().mean(), 1.0, 1e-3);
    }
}

TEST(Ops, ChannelAffineAndBroadcastGradients)
{
    nn::Rng rng(7);
    auto x = random_var({2, 3, 2, 2}, rng), g = random_var({2, 3}, rng), b = random_var({2, 3}, rng);
    EXPECT_LT(max_grad_error({x, g, b}, [&] { return probe(nn::channel_affine(x, g, b)); }), kTol);
    auto row = random_var({3}, rng);
    EXPECT_LT(max_grad_error({row}, [&] { return probe(nn::broadcast_rows(row, 4)); }), kTol);
}

TEST(Ops, AttentionGradientsAndRowsSumToOne)
{
    nn::Rng rng(8);
    auto q = random_var({2, 2, 6}, rng), k = random_var({2, 2, 6}, rng), v = random_var({2, 3, 6}, rng);
    EXPECT_LT(max_grad_error({q, k, v}, [&] { return probe(nn::attention(q, k, v)); }), kTol);
    auto A = nn::attention_weights(q.value(), k.value());
    for (int r = 0; r < 12; ++r)
        EXPECT_NEAR(A.array().segment(r * 6, 6).sum(), 1.0, 1e-12);
}

TEST(Ops, SpectralScaleGradient)
{
    nn::Rng rng(9);
    auto w = random_var({3, 2, 2, 2}, rng);
    nn::SpectralState<double> state;
    state.u = Eigen::ArrayXd::Ones(3) / std::sqrt(3.0);
    state.v = Eigen::ArrayXd::Zero(8);
    for (int i = 0; i < 30; ++i)
        nn::spectral_weight(w, state, true);
    // u, v held fixed inside the op
    const Eigen::VectorXd u = state.u.matrix(), v = state.v.matrix();
    EXPECT_LT(max_grad_error({w}, [&] { return probe(nn::spectral_scale(w, u, v)); }), kTol);
}

TEST(Ops, SoftmaxCrossEntropy)
{
    nn::Rng rng(10);
    auto logits = random_var({4, 3}, rng);
    std::vector<int> labels{0, 2, 1, 2};
    EXPECT_LT(max_grad_error({logits}, [&] { return nn::softmax_cross_entropy(logits, labels); }), kTol);
    VarD uniform(nn::Tensor<double>(Shape{1, 4}), false);
    EXPECT_NEAR(nn::softmax_cross_entropy(uniform, {1}).value()[0], std::log(4.0), 1e-12);
}

TEST(Ops, NoGradSkipsGraph)
{
    nn::Rng rng(11);
    auto a = random_var({2}, rng);
    nn::NoGradGuard guard;
    auto y = nn::relu(a);
    EXPECT_FALSE(y.requires_grad());
}

TEST(Ops, MulGateGradient)
{
    nn::Rng rng(12);
    auto x = random_var({2, 3}, rng), gate = random_var({1}, rng);
    EXPECT_LT(max_grad_error({x, gate}, [&] { return probe(nn::mul_gate(x, gate)); }), kTol);
}

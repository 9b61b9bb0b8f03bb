#include "opengan/nn/ops.hpp"

#include <cmath>

namespace opengan::nn {

namespace {

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op)
{
    if (a.shape() != b.shape())
        throw Error(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                    to_string(b.shape()));
}

template <typename Scalar>
void require_rank(const Var<Scalar>& x, int rank, const char* op)
{
    if (x.value().rank() != rank)
        throw Error(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                    to_string(x.shape()));
}

template <typename Scalar>
using RowMatrix = typename Tensor<Scalar>::Matrix;
template <typename Scalar>
using MapM = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using CMapM = Eigen::Map<const RowMatrix<Scalar>>;

template <typename Scalar>
void im2col(const Scalar* x, Index C, Index H, Index W, Index K, Index pad, Index Ho, Index Wo,
            Scalar* col)
{
    const Index plane = Ho * Wo;
    for (Index c = 0; c < C; ++c)
        for (Index ky = 0; ky < K; ++ky)
            for (Index kx = 0; kx < K; ++kx) {
                Scalar* dst = col + ((c * K + ky) * K + kx) * plane;
                const Scalar* src = x + c * H * W;
                for (Index oy = 0; oy < Ho; ++oy) {
                    const Index iy = oy + ky - pad;
                    Scalar* row = dst + oy * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(row, row + Wo, Scalar(0));
                        continue;
                    }
                    const Scalar* srow = src + iy * W;
                    for (Index ox = 0; ox < Wo; ++ox) {
                        const Index ix = ox + kx - pad;
                        row[ox] = (ix >= 0 && ix < W) ? srow[ix] : Scalar(0);
                    }
                }
            }
}

template <typename Scalar>
void col2im_add(const Scalar* col, Index C, Index H, Index W, Index K, Index pad, Index Ho,
                Index Wo, Scalar* x)
{
    const Index plane = Ho * Wo;
    for (Index c = 0; c < C; ++c)
        for (Index ky = 0; ky < K; ++ky)
            for (Index kx = 0; kx < K; ++kx) {
                const Scalar* src = col + ((c * K + ky) * K + kx) * plane;
                Scalar* dst = x + c * H * W;
                for (Index oy = 0; oy < Ho; ++oy) {
                    const Index iy = oy + ky - pad;
                    if (iy < 0 || iy >= H)
                        continue;
                    const Scalar* row = src + oy * Wo;
                    Scalar* drow = dst + iy * W;
                    for (Index ox = 0; ox < Wo; ++ox) {
                        const Index ix = ox + kx - pad;
                        if (ix >= 0 && ix < W)
                            drow[ix] += row[ox];
                    }
                }
            }
}

}  // namespace

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b)
{
    require_same_shape(a, b, "add");
    Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
    return make_result<Scalar>(std::move(out), {a, b}, [a, b](const Tensor<Scalar>& g) {
        if (a.requires_grad())
            a.grad_buffer().array() += g.array();
        if (b.requires_grad())
            b.grad_buffer().array() += g.array();
    });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b)
{
    require_same_shape(a, b, "sub");
    Tensor<Scalar> out(a.shape(), a.value().array() - b.value().array());
    return make_result<Scalar>(std::move(out), {a, b}, [a, b](const Tensor<Scalar>& g) {
        if (a.requires_grad())
            a.grad_buffer().array() += g.array();
        if (b.requires_grad())
            b.grad_buffer().array() -= g.array();
    });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b)
{
    require_same_shape(a, b, "mul");
    Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
    return make_result<Scalar>(std::move(out), {a, b}, [a, b](const Tensor<Scalar>& g) {
        if (a.requires_grad())
            a.grad_buffer().array() += g.array() * b.value().array();
        if (b.requires_grad())
            b.grad_buffer().array() += g.array() * a.value().array();
    });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar factor)
{
    Tensor<Scalar> out(x.shape(), x.value().array() * factor);
    return make_result<Scalar>(std::move(out), {x}, [x, factor](const Tensor<Scalar>& g) {
        x.grad_buffer().array() += g.array() * factor;
    });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& x, Scalar offset)
{
    Tensor<Scalar> out(x.shape(), x.value().array() + offset);
    return make_result<Scalar>(std::move(out), {x}, [x](const Tensor<Scalar>& g) {
        x.grad_buffer().array() += g.array();
    });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x)
{
    Tensor<Scalar> out(x.shape(), x.value().array().max(Scalar(0)));
    return make_result<Scalar>(std::move(out), {x}, [x](const Tensor<Scalar>& g) {
        x.grad_buffer().array() +=
            (x.value().array() > Scalar(0)).select(g.array(), Scalar(0));
    });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x)
{
    Tensor<Scalar> out(x.shape(), x.value().array().tanh());
    auto y = std::make_shared<typename Tensor<Scalar>::Array>(out.array());
    return make_result<Scalar>(std::move(out), {x}, [x, y](const Tensor<Scalar>& g) {
        x.grad_buffer().array() += g.array() * (Scalar(1) - y->square());
    });
}

template <typename Scalar>
Var<Scalar> mul_gate(const Var<Scalar>& x, const Var<Scalar>& gate)
{
    if (gate.value().size() != 1)
        throw Error("mul_gate: gate must have one element");
    const Scalar s = gate.value()[0];
    Tensor<Scalar> out(x.shape(), x.value().array() * s);
    return make_result<Scalar>(std::move(out), {x, gate}, [x, gate, s](const Tensor<Scalar>& g) {
        if (x.requires_grad())
            x.grad_buffer().array() += g.array() * s;
        if (gate.requires_grad())
            gate.grad_buffer()[0] += (g.array() * x.value().array()).sum();
    });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x)
{
    Tensor<Scalar> out(Shape{1}, Scalar(x.value().array().sum()));
    return make_result<Scalar>(std::move(out), {x}, [x](const Tensor<Scalar>& g) {
        x.grad_buffer().array() += g[0];
    });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x)
{
    const Scalar n = static_cast<Scalar>(x.value().size());
    Tensor<Scalar> out(Shape{1}, Scalar(x.value().array().sum() / n));
    return make_result<Scalar>(std::move(out), {x}, [x, n](const Tensor<Scalar>& g) {
        x.grad_buffer().array() += g[0] / n;
    });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape)
{
    Tensor<Scalar> out = x.value().reshaped(std::move(shape));
    return make_result<Scalar>(std::move(out), {x}, [x](const Tensor<Scalar>& g) {
        x.grad_buffer().array() += g.array();
    });
}

template <typename Scalar>
Var<Scalar> mean_row_sq_norm(const Var<Scalar>& x)
{
    const Scalar n = static_cast<Scalar>(x.dim(0));
    Tensor<Scalar> out(Shape{1}, Scalar(x.value().array().square().sum() / n));
    return make_result<Scalar>(std::move(out), {x}, [x, n](const Tensor<Scalar>& g) {
        x.grad_buffer().array() += (Scalar(2) * g[0] / n) * x.value().array();
    });
}

template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x)
{
    require_rank(x, 4, "global_avg_pool");
    const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor<Scalar> out(Shape{N, C});
    out.array() = x.value().matrix(N * C, HW).rowwise().mean().array();
    return make_result<Scalar>(std::move(out), {x}, [x, N, C, HW](const Tensor<Scalar>& g) {
        auto dx = x.grad_buffer().matrix(N * C, HW);
        dx.colwise() += (g.array() / static_cast<Scalar>(HW)).matrix();
    });
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias)
{
    require_rank(x, 2, "linear");
    require_rank(weight, 2, "linear");
    const Index N = x.dim(0), in = x.dim(1), outd = weight.dim(0);
    if (weight.dim(1) != in)
        throw Error("linear: input width " + std::to_string(in) + " does not match weight " +
                    to_string(weight.shape()));
    Tensor<Scalar> out(Shape{N, outd});
    auto X = x.value().matrix(N, in);
    auto Wm = weight.value().matrix(outd, in);
    auto Y = out.matrix(N, outd);
    Y.noalias() = X * Wm.transpose();
    if (bias.defined())
        Y.rowwise() += bias.value().matrix(1, outd).row(0);
    std::vector<Var<Scalar>> inputs{x, weight};
    if (bias.defined())
        inputs.push_back(bias);
    return make_result<Scalar>(std::move(out), inputs,
                               [x, weight, bias, N, in, outd](const Tensor<Scalar>& g) {
        auto G = g.matrix(N, outd);
        if (x.requires_grad())
            x.grad_buffer().matrix(N, in).noalias() += G * weight.value().matrix(outd, in);
        if (weight.requires_grad())
            weight.grad_buffer().matrix(outd, in).noalias() +=
                G.transpose() * x.value().matrix(N, in);
        if (bias.defined() && bias.requires_grad())
            bias.grad_buffer().matrix(1, outd).row(0) += G.colwise().sum();
    });
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   Index padding)
{
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d");
    const Index N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const Index Co = weight.dim(0), K = weight.dim(2);
    if (weight.dim(1) != Ci || weight.dim(3) != K)
        throw Error("conv2d: input " + to_string(x.shape()) + " incompatible with weight " +
                    to_string(weight.shape()));
    const Index Ho = H + 2 * padding - K + 1, Wo = W + 2 * padding - K + 1;
    if (Ho <= 0 || Wo <= 0)
        throw Error("conv2d: kernel larger than padded input");
    const Index rows = Ci * K * K, plane = Ho * Wo;
    const bool direct = (K == 1 && padding == 0);

    Tensor<Scalar> out(Shape{N, Co, Ho, Wo});
    auto Wm = weight.value().matrix(Co, rows);
    RowMatrix<Scalar> col(direct ? 0 : rows, direct ? 0 : plane);
    for (Index n = 0; n < N; ++n) {
        const Scalar* xn = x.value().data() + n * Ci * H * W;
        MapM<Scalar> Yn(out.data() + n * Co * plane, Co, plane);
        if (direct) {
            Yn.noalias() = Wm * CMapM<Scalar>(xn, Ci, plane);
        } else {
            im2col(xn, Ci, H, W, K, padding, Ho, Wo, col.data());
            Yn.noalias() = Wm * col;
        }
        if (bias.defined())
            Yn.colwise() += bias.value().matrix(Co, 1).col(0);
    }

    std::vector<Var<Scalar>> inputs{x, weight};
    if (bias.defined())
        inputs.push_back(bias);
    return make_result<Scalar>(
        std::move(out), inputs,
        [=](const Tensor<Scalar>& g) {
            auto Wmat = weight.value().matrix(Co, rows);
            RowMatrix<Scalar> colb(direct ? 0 : rows, direct ? 0 : plane);
            RowMatrix<Scalar> dcol;
            for (Index n = 0; n < N; ++n) {
                CMapM<Scalar> Gn(g.data() + n * Co * plane, Co, plane);
                const Scalar* xn = x.value().data() + n * Ci * H * W;
                if (weight.requires_grad()) {
                    auto dW = weight.grad_buffer().matrix(Co, rows);
                    if (direct) {
                        dW.noalias() += Gn * CMapM<Scalar>(xn, Ci, plane).transpose();
                    } else {
                        im2col(xn, Ci, H, W, K, padding, Ho, Wo, colb.data());
                        dW.noalias() += Gn * colb.transpose();
                    }
                }
                if (bias.defined() && bias.requires_grad())
                    bias.grad_buffer().matrix(Co, 1).col(0) += Gn.rowwise().sum();
                if (x.requires_grad()) {
                    Scalar* dxn = x.grad_buffer().data() + n * Ci * H * W;
                    if (direct) {
                        MapM<Scalar>(dxn, Ci, plane).noalias() += Wmat.transpose() * Gn;
                    } else {
                        dcol.noalias() = Wmat.transpose() * Gn;
                        col2im_add(dcol.data(), Ci, H, W, K, padding, Ho, Wo, dxn);
                    }
                }
            }
        });
}

template <typename Scalar>
Var<Scalar> upsample_nearest2x(const Var<Scalar>& x)
{
    require_rank(x, 4, "upsample_nearest2x");
    const Index NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<Scalar> out(Shape{x.dim(0), x.dim(1), 2 * H, 2 * W});
    const Scalar* src = x.value().data();
    Scalar* dst = out.data();
    for (Index p = 0; p < NC; ++p)
        for (Index y = 0; y < 2 * H; ++y)
            for (Index xx = 0; xx < 2 * W; ++xx)
                dst[(p * 2 * H + y) * 2 * W + xx] = src[(p * H + y / 2) * W + xx / 2];
    return make_result<Scalar>(std::move(out), {x}, [x, NC, H, W](const Tensor<Scalar>& g) {
        Scalar* dx = x.grad_buffer().data();
        const Scalar* gs = g.data();
        for (Index p = 0; p < NC; ++p)
            for (Index y = 0; y < 2 * H; ++y)
                for (Index xx = 0; xx < 2 * W; ++xx)
                    dx[(p * H + y / 2) * W + xx / 2] += gs[(p * 2 * H + y) * 2 * W + xx];
    });
}

template <typename Scalar>
Var<Scalar> avg_pool2x(const Var<Scalar>& x)
{
    require_rank(x, 4, "avg_pool2x");
    const Index NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2)
        throw Error("avg_pool2x: spatial dims must be even, got " + to_string(x.shape()));
    const Index Ho = H / 2, Wo = W / 2;
    Tensor<Scalar> out(Shape{x.dim(0), x.dim(1), Ho, Wo});
    const Scalar* src = x.value().data();
    Scalar* dst = out.data();
    for (Index p = 0; p < NC; ++p)
        for (Index y = 0; y < Ho; ++y)
            for (Index xx = 0; xx < Wo; ++xx) {
                const Scalar* s = src + (p * H + 2 * y) * W + 2 * xx;
                dst[(p * Ho + y) * Wo + xx] = Scalar(0.25) * (s[0] + s[1] + s[W] + s[W + 1]);
            }
    return make_result<Scalar>(std::move(out), {x}, [x, NC, H, W, Ho, Wo](const Tensor<Scalar>& g) {
        Scalar* dx = x.grad_buffer().data();
        const Scalar* gs = g.data();
        for (Index p = 0; p < NC; ++p)
            for (Index y = 0; y < Ho; ++y)
                for (Index xx = 0; xx < Wo; ++xx) {
                    const Scalar v = Scalar(0.25) * gs[(p * Ho + y) * Wo + xx];
                    Scalar* d = dx + (p * H + 2 * y) * W + 2 * xx;
                    d[0] += v;
                    d[1] += v;
                    d[W] += v;
                    d[W + 1] += v;
                }
    });
}

template <typename Scalar>
Var<Scalar> standardize(const Var<Scalar>& x, NormMode mode, Scalar eps, bool training,
                        RunningStats<Scalar>* running)
{
    require_rank(x, 4, "standardize");
    const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    const auto& in = x.value().array();
    if (!in.allFinite())
        throw Error("standardize: non-finite activations");
    Tensor<Scalar> out(x.shape());
    auto& o = out.array();

    // A group is the set of elements sharing one (mu, v) pair.
    const bool per_instance = (mode == NormMode::instance);
    const Index groups = per_instance ? N * C : C;
    const Index group_size = per_instance ? HW : N * HW;
    auto for_each_chunk = [per_instance, N, C, HW](Index group, auto&& fn) {
        if (per_instance) {
            fn(group * HW);
        } else {
            for (Index n = 0; n < N; ++n)
                fn((n * C + group) * HW);
        }
    };

    const bool use_running = (mode == NormMode::batch && running != nullptr && !training);
    if (mode == NormMode::batch && running != nullptr && running->mean.size() != C) {
        running->mean = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(C);
        running->var = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Ones(C);
    }

    auto inv_std = std::make_shared<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(groups);
    for (Index gidx = 0; gidx < groups; ++gidx) {
        Scalar mu = 0, var = 0;
        if (use_running) {
            mu = running->mean[gidx];
            var = running->var[gidx];
        } else {
            for_each_chunk(gidx, [&](Index off) { mu += in.segment(off, HW).sum(); });
            mu /= static_cast<Scalar>(group_size);
            for_each_chunk(gidx, [&](Index off) {
                var += (in.segment(off, HW) - mu).square().sum();
            });
            var /= static_cast<Scalar>(group_size);
            if (running != nullptr && mode == NormMode::batch && training) {
                const Scalar m = running->momentum;
                const Scalar unbiased =
                    group_size > 1 ? var * group_size / static_cast<Scalar>(group_size - 1) : var;
                running->mean[gidx] = (1 - m) * running->mean[gidx] + m * mu;
                running->var[gidx] = (1 - m) * running->var[gidx] + m * unbiased;
            }
        }
        const Scalar inv = Scalar(1) / std::sqrt(var + eps);
        (*inv_std)[gidx] = inv;
        for_each_chunk(gidx, [&](Index off) { o.segment(off, HW) = (in.segment(off, HW) - mu) * inv; });
    }

    auto xhat = std::make_shared<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(o);
    return make_result<Scalar>(std::move(out), {x}, [=](const Tensor<Scalar>& g) {
        auto& dx = x.grad_buffer().array();
        const auto& gs = g.array();
        for (Index gidx = 0; gidx < groups; ++gidx) {
            const Scalar inv = (*inv_std)[gidx];
            if (use_running) {
                for_each_chunk(gidx, [&](Index off) { dx.segment(off, HW) += gs.segment(off, HW) * inv; });
                continue;
            }
            Scalar mg = 0, mgx = 0;
            for_each_chunk(gidx, [&](Index off) {
                mg += gs.segment(off, HW).sum();
                mgx += (gs.segment(off, HW) * xhat->segment(off, HW)).sum();
            });
            mg /= static_cast<Scalar>(group_size);
            mgx /= static_cast<Scalar>(group_size);
            for_each_chunk(gidx, [&](Index off) {
                dx.segment(off, HW) +=
                    inv * (gs.segment(off, HW) - mg - xhat->segment(off, HW) * mgx);
            });
        }
    });
}

template <typename Scalar>
Var<Scalar> channel_affine(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta)
{
    require_rank(x, 4, "channel_affine");
    const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    const Shape expect{N, C};
    if (gamma.shape() != expect || beta.shape() != expect)
        throw Error("channel_affine: scale/bias must be " + to_string(expect) + ", got " +
                    to_string(gamma.shape()) + " and " + to_string(beta.shape()));
    Tensor<Scalar> out(x.shape());
    {
        auto X = x.value().matrix(N * C, HW);
        auto Y = out.matrix(N * C, HW);
        Y = (X.array().colwise() * gamma.value().array()).colwise() + beta.value().array();
    }
    return make_result<Scalar>(std::move(out), {x, gamma, beta},
                               [x, gamma, beta, N, C, HW](const Tensor<Scalar>& g) {
        auto G = g.matrix(N * C, HW);
        if (x.requires_grad())
            x.grad_buffer().matrix(N * C, HW).array() += G.array().colwise() * gamma.value().array();
        if (gamma.requires_grad())
            gamma.grad_buffer().array() +=
                (G.array() * x.value().matrix(N * C, HW).array()).rowwise().sum();
        if (beta.requires_grad())
            beta.grad_buffer().array() += G.array().rowwise().sum();
    });
}

template <typename Scalar>
Tensor<Scalar> attention_weights(const Tensor<Scalar>& query, const Tensor<Scalar>& key)
{
    const Index N = query.dim(0), Ck = query.dim(1), L = query.dim(2);
    Tensor<Scalar> A(Shape{N, L, L});
    for (Index n = 0; n < N; ++n) {
        CMapM<Scalar> Q(query.data() + n * Ck * L, Ck, L);
        CMapM<Scalar> K(key.data() + n * Ck * L, Ck, L);
        MapM<Scalar> An(A.data() + n * L * L, L, L);
        An.noalias() = Q.transpose() * K;
        for (Index i = 0; i < L; ++i) {
            auto row = An.row(i).array();
            row = (row - row.maxCoeff()).exp();
            row /= row.sum();
        }
    }
    return A;
}

template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& query, const Var<Scalar>& key, const Var<Scalar>& value)
{
    require_rank(query, 3, "attention");
    require_same_shape(query, key, "attention");
    const Index N = query.dim(0), Ck = query.dim(1), L = query.dim(2);
    const Index Cv = value.dim(1);
    if (value.dim(0) != N || value.dim(2) != L)
        throw Error("attention: value shape " + to_string(value.shape()) + " incompatible");
    auto A = std::make_shared<Tensor<Scalar>>(attention_weights(query.value(), key.value()));
    Tensor<Scalar> out(Shape{N, Cv, L});
    for (Index n = 0; n < N; ++n) {
        CMapM<Scalar> V(value.value().data() + n * Cv * L, Cv, L);
        CMapM<Scalar> An(A->data() + n * L * L, L, L);
        MapM<Scalar>(out.data() + n * Cv * L, Cv, L).noalias() = V * An.transpose();
    }
    return make_result<Scalar>(std::move(out), {query, key, value}, [=](const Tensor<Scalar>& g) {
        RowMatrix<Scalar> dA(L, L), dS(L, L);
        for (Index n = 0; n < N; ++n) {
            CMapM<Scalar> G(g.data() + n * Cv * L, Cv, L);
            CMapM<Scalar> V(value.value().data() + n * Cv * L, Cv, L);
            CMapM<Scalar> An(A->data() + n * L * L, L, L);
            if (value.requires_grad())
                MapM<Scalar>(value.grad_buffer().data() + n * Cv * L, Cv, L).noalias() += G * An;
            if (!query.requires_grad() && !key.requires_grad())
                continue;
            dA.noalias() = G.transpose() * V;
            const auto rowdot = (dA.array() * An.array()).rowwise().sum().eval();
            dS = An.array() * (dA.array().colwise() - rowdot);
            CMapM<Scalar> Q(query.value().data() + n * Ck * L, Ck, L);
            CMapM<Scalar> K(key.value().data() + n * Ck * L, Ck, L);
            if (query.requires_grad())
                MapM<Scalar>(query.grad_buffer().data() + n * Ck * L, Ck, L).noalias() +=
                    K * dS.transpose();
            if (key.requires_grad())
                MapM<Scalar>(key.grad_buffer().data() + n * Ck * L, Ck, L).noalias() += Q * dS;
        }
    });
}

template <typename Scalar>
Var<Scalar> spectral_scale(const Var<Scalar>& weight,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v)
{
    const Index rows = weight.dim(0), cols = weight.value().size() / rows;
    auto Wm = weight.value().matrix(rows, cols);
    const Scalar sigma = u.dot(Wm * v);
    if (!(sigma > Scalar(0)) || !std::isfinite(sigma))
        return make_result<Scalar>(weight.value(), {weight}, [weight](const Tensor<Scalar>& g) {
            weight.grad_buffer().array() += g.array();
        });
    Tensor<Scalar> out(weight.shape(), weight.value().array() / sigma);
    auto uv = std::make_shared<RowMatrix<Scalar>>(u * v.transpose());
    return make_result<Scalar>(std::move(out), {weight},
                               [weight, sigma, uv, rows, cols](const Tensor<Scalar>& g) {
        const Scalar inner = (g.array() * weight.value().array()).sum();
        auto dW = weight.grad_buffer().matrix(rows, cols);
        dW += g.matrix(rows, cols) / sigma - (inner / (sigma * sigma)) * (*uv);
    });
}

template <typename Scalar>
Var<Scalar> softmax_cross_entropy(const Var<Scalar>& logits, const std::vector<int>& labels)
{
    require_rank(logits, 2, "softmax_cross_entropy");
    const Index N = logits.dim(0), K = logits.dim(1);
    if (static_cast<Index>(labels.size()) != N)
        throw Error("softmax_cross_entropy: label count mismatch");
    auto probs = std::make_shared<RowMatrix<Scalar>>(logits.value().matrix(N, K));
    Scalar loss = 0;
    for (Index n = 0; n < N; ++n) {
        if (labels[n] < 0 || labels[n] >= K)
            throw Error("softmax_cross_entropy: label out of range");
        auto row = probs->row(n).array();
        const Scalar mx = row.maxCoeff();
        row = (row - mx).exp();
        const Scalar z = row.sum();
        row /= z;
        loss += -(logits.value()[n * K + labels[n]] - mx - std::log(z));
    }
    loss /= static_cast<Scalar>(N);
    return make_result<Scalar>(Tensor<Scalar>(Shape{1}, loss), {logits},
                               [logits, probs, labels, N, K](const Tensor<Scalar>& g) {
        RowMatrix<Scalar> d = *probs;
        for (Index n = 0; n < N; ++n)
            d(n, labels[n]) -= Scalar(1);
        logits.grad_buffer().matrix(N, K) += d * (g[0] / static_cast<Scalar>(N));
    });
}

#define OPENGAN_INSTANTIATE_OPS(S)                                                              \
    template Var<S> add(const Var<S>&, const Var<S>&);                                          \
    template Var<S> sub(const Var<S>&, const Var<S>&);                                          \
    template Var<S> mul(const Var<S>&, const Var<S>&);                                          \
    template Var<S> scale(const Var<S>&, S);                                                    \
    template Var<S> add_scalar(const Var<S>&, S);                                               \
    template Var<S> relu(const Var<S>&);                                                        \
    template Var<S> tanh(const Var<S>&);                                                        \
    template Var<S> mul_gate(const Var<S>&, const Var<S>&);                                     \
    template Var<S> sum(const Var<S>&);                                                         \
    template Var<S> mean(const Var<S>&);                                                        \
    template Var<S> reshape(const Var<S>&, Shape);                                              \
    template Var<S> mean_row_sq_norm(const Var<S>&);                                            \
    template Var<S> global_avg_pool(const Var<S>&);                                             \
    template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                        \
    template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, Index);                 \
    template Var<S> upsample_nearest2x(const Var<S>&);                                          \
    template Var<S> avg_pool2x(const Var<S>&);                                                  \
    template Var<S> standardize(const Var<S>&, NormMode, S, bool, RunningStats<S>*);            \
    template Var<S> channel_affine(const Var<S>&, const Var<S>&, const Var<S>&);                \
    template Tensor<S> attention_weights(const Tensor<S>&, const Tensor<S>&);                   \
    template Var<S> attention(const Var<S>&, const Var<S>&, const Var<S>&);                     \
    template Var<S> spectral_scale(const Var<S>&, const Eigen::Matrix<S, Eigen::Dynamic, 1>&,   \
                                   const Eigen::Matrix<S, Eigen::Dynamic, 1>&);                 \
    template Var<S> softmax_cross_entropy(const Var<S>&, const std::vector<int>&);

OPENGAN_INSTANTIATE_OPS(float)
OPENGAN_INSTANTIATE_OPS(double)

}  // namespace opengan::nn

#pragma once

#include "opengan/nn/tensor.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace opengan::nn {

/// Deterministic substream seed: one global seed fans out to named streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
    std::uint64_t next() { return engine_(); }

    template <typename Scalar>
    Tensor<Scalar> normal_tensor(Shape shape, double stddev = 1.0, double mean = 0.0)
    {
        Tensor<Scalar> t(std::move(shape));
        for (Index i = 0; i < t.size(); ++i)
            t[i] = static_cast<Scalar>(mean + stddev * normal());
        return t;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace opengan::nn

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace opengan {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace nn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major tensor. Images are stored NCHW, matrices as [rows, cols].
template <typename Scalar>
class Tensor {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatrixMap = Eigen::Map<Matrix>;
    using ConstMatrixMap = Eigen::Map<const Matrix>;

    Tensor() = default;
    explicit Tensor(Shape shape, Scalar fill = Scalar(0))
        : shape_(std::move(shape)), data_(Array::Constant(numel(shape_), fill)) {}
    Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (data_.size() != numel(shape_))
            throw Error("tensor data size " + std::to_string(data_.size()) +
                        " does not match shape " + to_string(shape_));
    }

    const Shape& shape() const { return shape_; }
    Index dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    Index size() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    Array& array() { return data_; }
    const Array& array() const { return data_; }
    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    MatrixMap matrix(Index rows, Index cols) { return MatrixMap(data_.data(), rows, cols); }
    ConstMatrixMap matrix(Index rows, Index cols) const
    {
        return ConstMatrixMap(data_.data(), rows, cols);
    }
    /// View as [dim(0), size/dim(0)].
    MatrixMap rows_view() { return matrix(shape_.at(0), size() / shape_.at(0)); }
    ConstMatrixMap rows_view() const { return matrix(shape_.at(0), size() / shape_.at(0)); }

    Tensor reshaped(Shape shape) const
    {
        if (numel(shape) != size())
            throw Error("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
        return Tensor(std::move(shape), data_);
    }

    template <typename Other>
    Tensor<Other> cast() const
    {
        return Tensor<Other>(shape_, data_.template cast<Other>());
    }

private:
    Shape shape_;
    Array data_;
};

/// FNV-1a over the raw bytes; used for frozen-parameter audits and config hashes.
std::uint64_t fnv1a(const void* bytes, std::size_t count, std::uint64_t seed = 1469598103934665603ULL);
std::string hex64(std::uint64_t value);

}  // namespace nn
}  // namespace opengan

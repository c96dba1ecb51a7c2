#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sncl/errors.hpp"

namespace sncl {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

/// Dense row-major array of doubles. The leading axis is the batch axis
/// wherever a layer consumes a Tensor.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(numel(shape_), fill) {
        check_shape();
    }

    Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
        check_shape();
        if (data_.size() != numel(shape_))
            throw StructuralError("tensor of shape " + to_string(shape_) + " given " +
                                  std::to_string(data_.size()) + " values");
    }

    static Tensor from(Shape shape, std::initializer_list<double> values) {
        return Tensor(std::move(shape), std::vector<double>(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    /// Same values under a new shape of equal element count.
    Tensor reshaped(Shape shape) const {
        if (numel(shape) != data_.size())
            throw StructuralError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
        return Tensor(std::move(shape), data_);
    }

    /// Throws NumericError on the first NaN/Inf.
    void check_finite(const char* what = "tensor") const {
        for (std::size_t i = 0; i < data_.size(); ++i)
            if (!std::isfinite(data_[i]))
                throw NumericError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }

    bool operator==(const Tensor& other) const = default;

private:
    void check_shape() const {
        for (auto d : shape_)
            if (d == 0) throw StructuralError("tensor dimensions must be positive, got " + to_string(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) throw StructuralError(std::string(what) + ": shape " + to_string(a) + " vs " + to_string(b));
}

/// Rounds every value to the nearest binary32 so the tensor stores losslessly as f32.
inline void snap_to_f32(std::span<double> values) {
    for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace sncl

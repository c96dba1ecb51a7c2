#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sncl/errors.hpp"
#include "sncl/tensor.hpp"

namespace sncl::subnet {

/// 0/1 mask over a parameter tensor, with its popcount cached.
class BinaryMask {
public:
    BinaryMask() = default;
    explicit BinaryMask(Shape shape) : shape_(std::move(shape)), bits_(numel(shape_), 0) {}

    BinaryMask(Shape shape, std::vector<std::uint8_t> bits) : shape_(std::move(shape)), bits_(std::move(bits)) {
        if (bits_.size() != numel(shape_)) throw StructuralError("mask bit count does not match shape");
        for (auto b : bits_)
            if (b > 1) throw DataError("mask values must be 0 or 1");
        popcount_ = static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }

    static BinaryMask ones(Shape shape) {
        BinaryMask m(std::move(shape));
        std::fill(m.bits_.begin(), m.bits_.end(), std::uint8_t{1});
        m.popcount_ = m.bits_.size();
        return m;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return bits_.size(); }
    std::size_t popcount() const noexcept { return popcount_; }
    bool empty() const noexcept { return bits_.empty(); }
    bool test(std::size_t i) const { return bits_[i] != 0; }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    void set(std::size_t i, bool on) {
        if (test(i) == on) return;
        bits_[i] = on ? 1 : 0;
        popcount_ += on ? 1 : std::size_t(-1);
    }

    /// The mask as a 0.0/1.0 vector, the form layers multiply with.
    std::vector<double> as_real() const { return {bits_.begin(), bits_.end()}; }

    bool operator==(const BinaryMask& other) const { return shape_ == other.shape_ && bits_ == other.bits_; }

private:
    Shape shape_;
    std::vector<std::uint8_t> bits_;
    std::size_t popcount_ = 0;
};

/// round(c*n) with halves rounded up.
inline std::size_t capacity_count(double c, std::size_t n) {
    return static_cast<std::size_t>(std::floor(c * static_cast<double>(n) + 0.5));
}

namespace detail {

/// Order-preserving unsigned key of a finite double (-0.0 maps like +0.0).
inline std::uint64_t order_key(double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v);
    return (bits >> 63) ? ~bits : bits | (std::uint64_t{1} << 63);
}

}  // namespace detail

/// Value of the k-th largest of s[0..n), 1 <= k <= n, by most-significant-digit
/// radix selection over order-preserving keys.
inline double kth_largest(const double* s, std::size_t n, std::size_t k) {
    constexpr int digit_bits = 11;
    constexpr std::size_t buckets = std::size_t{1} << digit_bits;
    std::vector<std::uint64_t> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = detail::order_key(s[i]);
    for (int shift = 64 - digit_bits; keys.size() > 64 && shift > -digit_bits; shift -= digit_bits) {
        const int sh = std::max(shift, 0);
        std::array<std::size_t, buckets> hist{};
        for (auto key : keys) ++hist[(key >> sh) & (buckets - 1)];
        std::size_t bucket = buckets, seen = 0;
        while (bucket-- > 0) {
            if (seen + hist[bucket] >= k) break;
            seen += hist[bucket];
        }
        std::size_t kept = 0;
        for (auto key : keys)
            if (((key >> sh) & (buckets - 1)) == bucket) keys[kept++] = key;
        keys.resize(kept);
        k -= seen;
    }
    std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k - 1), keys.end(), std::greater<>{});
    const std::uint64_t key = keys[k - 1];
    const std::uint64_t bits = (key >> 63) ? key & ~(std::uint64_t{1} << 63) : ~key;
    return std::bit_cast<double>(bits);
}

/// Marks the round(c*n) largest scores; equal scores go to the lower flat index first.
inline BinaryMask select_topc_mask(const Tensor& scores, double c) {
    if (!(c > 0.0 && c <= 1.0)) throw ParameterError("capacity must lie in (0, 1], got " + std::to_string(c));
    scores.check_finite("weight scores");
    const std::size_t n = scores.size();
    const std::size_t k = std::min(capacity_count(c, n), n);
    if (k == 0) return BinaryMask(scores.shape());

    const double* s = scores.data();
    const double threshold = kth_largest(s, n, k);
    std::vector<std::uint8_t> bits(n);
    std::size_t above = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bits[i] = s[i] > threshold ? 1 : 0;
        above += bits[i];
    }
    for (std::size_t i = 0, ties = k - above; i < n && ties > 0; ++i)
        if (s[i] == threshold) {
            bits[i] = 1;
            --ties;
        }
    return BinaryMask(scores.shape(), std::move(bits));
}

/// Element-wise OR.
inline BinaryMask accumulate(const BinaryMask& prev, const BinaryMask& next) {
    require_same_shape(prev.shape(), next.shape(), "accumulate");
    BinaryMask out(prev.shape());
    for (std::size_t i = 0; i < prev.size(); ++i) out.set(i, prev.test(i) || next.test(i));
    return out;
}

/// Number of positions set in both masks.
inline std::size_t overlap(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a.shape(), b.shape(), "overlap");
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += (a.test(i) && b.test(i)) ? 1 : 0;
    return n;
}

/// Eight mask bits per byte, element i at bit (i % 8) of byte i / 8; tail bits zero.
inline std::vector<std::uint8_t> bitpack(std::span<const std::uint8_t> bits) {
    std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] > 1) throw DataError("bitpack: non-binary value at index " + std::to_string(i));
        out[i / 8] |= static_cast<std::uint8_t>(bits[i] << (i % 8));
    }
    return out;
}

inline std::vector<std::uint8_t> bitpack(const BinaryMask& mask) { return bitpack(mask.bits()); }

/// Bitpacks a real-valued 0/1 vector; anything else is rejected.
inline std::vector<std::uint8_t> bitpack(std::span<const double> values) {
    std::vector<std::uint8_t> bits(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] != 0.0 && values[i] != 1.0)
            throw DataError("bitpack: non-binary value at index " + std::to_string(i));
        bits[i] = values[i] == 1.0 ? 1 : 0;
    }
    return bitpack(std::span<const std::uint8_t>(bits));
}

inline BinaryMask bitunpack(std::span<const std::uint8_t> bytes, const Shape& shape) {
    const std::size_t n = numel(shape);
    if (bytes.size() != (n + 7) / 8)
        throw DataError("bitunpack: expected " + std::to_string((n + 7) / 8) + " bytes, got " +
                        std::to_string(bytes.size()));
    std::vector<std::uint8_t> bits(n);
    for (std::size_t i = 0; i < n; ++i) bits[i] = (bytes[i / 8] >> (i % 8)) & 1u;
    return BinaryMask(shape, std::move(bits));
}

}  // namespace sncl::subnet

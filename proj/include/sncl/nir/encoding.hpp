#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "sncl/tensor.hpp"

namespace sncl::nir {

inline constexpr double encoding_base = 1.25;
inline constexpr std::size_t encoding_pairs = 40;  // sin/cos pairs per index axis
inline constexpr std::size_t encoding_dim = 4 * encoding_pairs;

/// Index i of n mapped to [0, 1]; a single entry maps to 0.
inline double normalize_index(std::size_t i, std::size_t n) {
    return n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
}

/// [sin(b^0 pi s), cos(b^0 pi s), ..., sin(b^39 pi s), cos(b^39 pi s), same for t]
/// for s and t already normalized to [0, 1].
inline std::vector<double> positional_encode(double s, double t) {
    std::vector<double> out;
    out.reserve(encoding_dim);
    for (double v : {s, t}) {
        double scale = std::numbers::pi;
        for (std::size_t j = 0; j < encoding_pairs; ++j) {
            out.push_back(std::sin(scale * v));
            out.push_back(std::cos(scale * v));
            scale *= encoding_base;
        }
    }
    return out;
}

/// Encodings of frames `frames` of session index `s` among `sessions`, as a
/// (len(frames), 160) batch.
inline Tensor encode_frames(std::size_t s, std::size_t sessions, const std::vector<std::size_t>& frames,
                            std::size_t frame_count) {
    Tensor out({frames.size(), encoding_dim});
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto e = positional_encode(normalize_index(s, sessions), normalize_index(frames[i], frame_count));
        std::copy(e.begin(), e.end(), out.data() + i * encoding_dim);
    }
    return out;
}

}  // namespace sncl::nir

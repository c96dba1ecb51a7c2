#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sncl/errors.hpp"

namespace sncl::harness {

/// Per-tensor affine 8-bit code: w ~ min + q * scale.
struct Q8 {
    float min = 0.0f;
    float scale = 1.0f;
    std::vector<std::uint8_t> q;
};

/// scale = (max - min) / 255 rounded to f32; each q is the code whose
/// reconstruction is nearest to w (the round() candidate and its neighbours
/// are compared exactly). Constant tensors get scale 1 and q 0.
inline Q8 quantize_q8(std::span<const double> w) {
    Q8 out;
    out.q.assign(w.size(), 0);
    if (w.empty()) return out;
    double lo = w[0], hi = w[0];
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(w[i])) throw NumericError("quantize_q8: non-finite value at index " + std::to_string(i));
        lo = std::min(lo, w[i]);
        hi = std::max(hi, w[i]);
    }
    out.min = static_cast<float>(lo);
    if (static_cast<double>(out.min) > lo && hi > lo) out.min = std::nextafter(out.min, -INFINITY);
    const float scale = static_cast<float>((hi - static_cast<double>(out.min)) / 255.0);
    // a range below f32 resolution is stored as a constant
    if (!(scale > 0.0f) || !std::isfinite(scale)) return out;
    out.scale = scale;
    const double m = out.min, s = out.scale;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const long q0 = std::lround((w[i] - m) / s);
        long best = std::clamp(q0, 0L, 255L);
        double err = std::abs(m + static_cast<double>(best) * s - w[i]);
        for (long c = q0 - 1; c <= q0 + 1; ++c) {
            if (c < 0 || c > 255) continue;
            const double e = std::abs(m + static_cast<double>(c) * s - w[i]);
            if (e < err) {
                err = e;
                best = c;
            }
        }
        out.q[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

/// min + q * scale, evaluated exactly in double.
inline std::vector<double> dequantize_q8(const Q8& r) {
    std::vector<double> w(r.q.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<double>(r.min) + static_cast<double>(r.q[i]) * static_cast<double>(r.scale);
    return w;
}

}  // namespace sncl::harness

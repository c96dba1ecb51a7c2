#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "sncl/errors.hpp"
#include "sncl/rng.hpp"
#include "sncl/tensor.hpp"

namespace sncl::nir {

/// Frames of one video session as (T, 3, H, W) with values in [0, 1].
struct VideoSession {
    int session = 1;
    Tensor frames;

    std::size_t frame_count() const { return frames.dim(0); }
    std::size_t height() const { return frames.dim(2); }
    std::size_t width() const { return frames.dim(3); }

    /// Frame t as (1, 3, H, W).
    Tensor frame(std::size_t t) const {
        const std::size_t n = frames.size() / frame_count();
        return Tensor({1, 3, height(), width()},
                      std::vector<double>(frames.data() + t * n, frames.data() + (t + 1) * n));
    }
};

enum class VideoPattern {
    gradient,  // drifting colour gradient
    checker,   // soft checkerboard sliding sideways
    texture,   // sum of random low-frequency waves drifting over time
};

/// Deterministic synthetic video. The pattern cycles with the session id and
/// its frequencies, phases and colours come from (seed, session).
inline VideoSession synth_video(int session, std::size_t frames, std::size_t height, std::size_t width,
                                std::uint64_t seed) {
    if (frames == 0 || height == 0 || width == 0) throw DataError("video needs at least one frame and pixel");
    Rng rng = Rng::stream(seed, 9000 + static_cast<std::uint64_t>(session));
    if (session < 1) throw DataError("video session ids start at 1");
    const auto pattern = static_cast<VideoPattern>((session - 1) % 3);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double H = static_cast<double>(height), W = static_cast<double>(width), T = static_cast<double>(frames);

    double phase[3], tint[3];
    for (int c = 0; c < 3; ++c) {
        phase[c] = rng.uniform(0.0, two_pi);
        tint[c] = rng.uniform(0.5, 1.0);
    }
    const double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5), speed = rng.uniform(0.5, 1.0);
    struct Wave {
        double kx, ky, w, ph, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 4; ++k)
        waves.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0), rng.uniform(0.0, two_pi),
                         rng.uniform(0.3, 1.0)});
    double amp_sum = 0.0;
    for (const auto& w : waves) amp_sum += w.amp;

    VideoSession v{session, Tensor({frames, 3, height, width})};
    for (std::size_t t = 0; t < frames; ++t)
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < height; ++i)
                for (std::size_t j = 0; j < width; ++j) {
                    const double x = static_cast<double>(j) / W, y = static_cast<double>(i) / H;
                    const double tau = static_cast<double>(t) / T;
                    double s = 0.0;
                    switch (pattern) {
                        case VideoPattern::gradient:
                            s = std::sin(two_pi * (fx * x + fy * y + speed * tau) + phase[c]);
                            break;
                        case VideoPattern::checker:
                            s = std::tanh(1.5 * std::sin(two_pi * 2.0 * (x + speed * tau)) * std::sin(two_pi * 2.0 * y)) /
                                std::tanh(1.5) * std::cos(phase[c]);
                            break;
                        case VideoPattern::texture:
                            for (const auto& w : waves)
                                s += w.amp * std::sin(two_pi * (w.kx * x + w.ky * y + w.w * tau) + w.ph + phase[c]);
                            s /= amp_sum;
                            break;
                    }
                    v.frames[((t * 3 + static_cast<std::size_t>(c)) * height + i) * width + j] = 0.5 + 0.4 * tint[c] * s;
                }
    return v;
}

}  // namespace sncl::nir

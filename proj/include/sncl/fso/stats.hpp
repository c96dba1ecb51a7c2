#pragma once

#include <cmath>
#include <vector>

#include "sncl/fso/fft.hpp"
#include "sncl/tensor.hpp"

namespace sncl::fso {

struct FeatureStats {
    std::vector<double> channel_variance;
    /// Spectral energy per integer radial frequency, summed over channels and
    /// normalized so the bins add up to the time-domain energy sum(y^2).
    std::vector<double> radial_energy;
    double spatial_energy = 0.0;
};

/// Variance per channel and radial frequency-energy profile of a (C, L) or
/// (C, H, W) feature map.
inline FeatureStats fso_feature_stats(const Tensor& y) {
    if (y.rank() != 2 && y.rank() != 3) throw StructuralError("feature stats expect (C, L) or (C, H, W)");
    const std::size_t C = y.dim(0);
    const std::vector<std::size_t> dims(y.shape().begin() + 1, y.shape().end());
    const std::size_t rows = dims.size() == 2 ? dims[0] : 1;
    const std::size_t W = dims.back();
    const std::size_t N = rows * W;

    FeatureStats st;
    for (std::size_t c = 0; c < C; ++c) {
        const double* v = y.data() + c * N;
        double mean = 0.0;
        for (std::size_t i = 0; i < N; ++i) mean += v[i];
        mean /= static_cast<double>(N);
        double var = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            var += (v[i] - mean) * (v[i] - mean);
            st.spatial_energy += v[i] * v[i];
        }
        st.channel_variance.push_back(var / static_cast<double>(N));
    }

    const auto radius = [&](std::size_t r, std::size_t c) {
        const double fr = static_cast<double>(r <= rows / 2 ? r : rows - r);
        return std::sqrt(fr * fr + static_cast<double>(c * c));
    };
    const std::size_t half = W / 2 + 1;
    st.radial_energy.assign(static_cast<std::size_t>(std::lround(radius(rows / 2, half - 1))) + 1, 0.0);

    RealFft& fft = cached_fft(dims, C);
    std::copy_n(y.data(), y.size(), fft.real());
    fft.forward();
    const std::size_t S = fft.spectrum_length();
    for (std::size_t ch = 0; ch < C; ++ch)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < half; ++c) {
                const double e = std::norm(fft.spectrum()[ch * S + r * half + c]);
                const double mult = (c == 0 || (W % 2 == 0 && c == W / 2)) ? 1.0 : 2.0;
                st.radial_energy[static_cast<std::size_t>(std::lround(radius(r, c)))] +=
                    mult * e / static_cast<double>(N);
            }
    return st;
}

}  // namespace sncl::fso

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sncl/rng.hpp"
#include "sncl/subnet/mask.hpp"

namespace sncl::softnet {

using subnet::BinaryMask;

/// m_soft = m_major + m_minor: exactly 1 on the top-c scores, a fixed
/// U(0,1) draw everywhere else.
struct SoftMask {
    BinaryMask major;
    std::vector<double> values;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    std::size_t size() const noexcept { return values.size(); }
    bool is_major(std::size_t i) const { return major.test(i); }
};

/// The minor draws for a tensor of n entries. Drawn once per tensor, in flat
/// order, with 24-bit precision so they store exactly as f32.
inline std::vector<double> minor_draws(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
    Rng rng = Rng::stream(seed, 0x50F7ULL + stream);
    std::vector<double> u(n);
    for (auto& v : u) v = rng.uniform_f32();
    return u;
}

inline SoftMask build_soft_mask(const Tensor& rho, double c, std::uint64_t seed, std::uint64_t stream = 0) {
    if (!(c > 0.0 && c < 1.0))
        throw ParameterError("soft mask capacity must lie in (0, 1), got " + std::to_string(c));
    SoftMask m;
    m.major = subnet::select_topc_mask(rho, c);
    m.values = minor_draws(rho.size(), seed, stream);
    m.seed = seed;
    m.stream = stream;
    for (std::size_t i = 0; i < m.values.size(); ++i)
        if (m.major.test(i)) m.values[i] = 1.0;
    return m;
}

}  // namespace sncl::softnet

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sncl/tensor.hpp"

namespace sncl::diffcore {

struct LossValue {
    double value = 0.0;
    Tensor grad;  // dLoss/dInput, same shape as the input
};

/// Mean softmax cross-entropy over logits of shape (B, K).
inline LossValue softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw StructuralError("cross entropy expects (B, K) logits and B labels");
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    LossValue out{0.0, Tensor(logits.shape())};
    for (std::size_t n = 0; n < B; ++n) {
        const int y = labels[n];
        if (y < 0 || static_cast<std::size_t>(y) >= K) throw DataError("label out of range for head");
        const double* z = logits.data() + n * K;
        const double zmax = *std::max_element(z, z + K);
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) denom += std::exp(z[k] - zmax);
        const double log_denom = std::log(denom) + zmax;
        out.value += log_denom - z[y];
        double* g = out.grad.data() + n * K;
        for (std::size_t k = 0; k < K; ++k) g[k] = std::exp(z[k] - log_denom) / static_cast<double>(B);
        g[y] -= 1.0 / static_cast<double>(B);
    }
    out.value /= static_cast<double>(B);
    return out;
}

/// Row-wise argmax; ties go to the lower index.
inline std::vector<int> argmax_rows(const Tensor& logits) {
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    std::vector<int> out(B);
    for (std::size_t n = 0; n < B; ++n) {
        const double* z = logits.data() + n * K;
        out[n] = static_cast<int>(std::max_element(z, z + K) - z);
    }
    return out;
}

}  // namespace sncl::diffcore

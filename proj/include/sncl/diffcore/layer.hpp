#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sncl/errors.hpp"
#include "sncl/subnet/scored_parameter.hpp"
#include "sncl/tensor.hpp"

namespace sncl::diffcore {

using subnet::ScoredParameter;

/// Effective mask per maskable parameter, indexed by parameter slot.
/// Values are 0/1 for binary subnetworks and lie in [0, 1] for soft masks.
class MaskSet {
public:
    MaskSet() = default;

    /// Every maskable parameter used densely (no subnetwork).
    static MaskSet dense() {
        MaskSet m;
        m.dense_ = true;
        return m;
    }

    void set(std::size_t slot, std::vector<double> mask) {
        if (slot >= masks_.size()) masks_.resize(slot + 1);
        masks_[slot] = std::move(mask);
    }

    /// Empty result means "all ones".
    std::vector<double> find(const ScoredParameter& p) const {
        if (!p.maskable || dense_) return {};
        if (p.slot >= masks_.size() || masks_[p.slot].empty())
            throw LookupError("mask set has no mask for parameter '" + p.name + "'");
        const auto& m = masks_[p.slot];
        if (m.size() != p.size())
            throw StructuralError("mask for '" + p.name + "' has " + std::to_string(m.size()) +
                                  " entries, parameter has " + std::to_string(p.size()));
        return m;
    }

    bool is_dense() const noexcept { return dense_; }

private:
    std::vector<std::vector<double>> masks_;
    bool dense_ = false;
};

/// theta ⊙ m, with masked-out positions exactly +0.
inline std::vector<double> effective_weights(const ScoredParameter& p, const std::vector<double>& mask) {
    const auto& theta = p.theta.storage();
    if (mask.empty()) return theta;
    std::vector<double> w(theta.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double m = mask[i];
        w[i] = m == 0.0 ? 0.0 : (m == 1.0 ? theta[i] : theta[i] * m);
    }
    return w;
}

/// Routes the gradient w.r.t. the effective weight back to theta (scaled by
/// the mask, which is treated as a constant) and to the scores through the
/// straight-through convention dL/drho = dL/dw_eff ⊙ theta.
inline void accumulate_masked_grad(ScoredParameter& p, const std::vector<double>& mask, std::span<const double> g_eff) {
    const auto& theta = p.theta.storage();
    if (mask.empty()) {
        for (std::size_t i = 0; i < g_eff.size(); ++i) p.grad_theta[i] += g_eff[i];
    } else {
        for (std::size_t i = 0; i < g_eff.size(); ++i) p.grad_theta[i] += g_eff[i] * mask[i];
    }
    if (p.maskable)
        for (std::size_t i = 0; i < g_eff.size(); ++i) p.grad_rho[i] += g_eff[i] * theta[i];
}

class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    /// Shapes include the leading batch axis.
    virtual Shape output_shape(const Shape& in) const = 0;
    /// When `record` is set the layer keeps what backward needs.
    virtual Tensor forward(const Tensor& x, const MaskSet& masks, bool record) = 0;
    /// Returns dL/dx and accumulates parameter gradients; consumes the record.
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual std::vector<ScoredParameter*> parameters() { return {}; }
};

using LayerPtr = std::unique_ptr<Layer>;

/// Cached forward state shared by the layer implementations.
struct Record {
    Tensor input;
    std::vector<std::vector<double>> masks;  // empty entry: parameter used densely
    std::vector<std::vector<double>> weights;
};

inline Record& require_record(std::optional<Record>& rec, const std::string& kind) {
    if (!rec) throw UsageError(kind + ": backward called without a recorded forward pass");
    return *rec;
}

}  // namespace sncl::diffcore

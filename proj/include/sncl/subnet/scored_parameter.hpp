#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sncl/errors.hpp"
#include "sncl/subnet/mask.hpp"
#include "sncl/tensor.hpp"

namespace sncl::subnet {

/// A weight tensor together with its weight scores and the masks each
/// session selected from them.
///
/// `accumulated` is the OR of every frozen session mask and grows
/// monotonically; positions set in it never change again under the gated
/// update. Non-maskable parameters (per-session heads) carry no scores and
/// are always used densely.
struct ScoredParameter {
    static constexpr std::size_t no_slot = std::numeric_limits<std::size_t>::max();

    ScoredParameter() = default;
    ScoredParameter(std::string name_, Shape shape, std::size_t fan_in_, bool maskable_ = true)
        : name(std::move(name_)),
          theta(shape),
          rho(shape),
          grad_theta(numel(shape), 0.0),
          grad_rho(numel(shape), 0.0),
          accumulated(shape),
          fan_in(fan_in_),
          maskable(maskable_) {}

    std::string name;
    Tensor theta;
    Tensor rho;
    std::vector<double> grad_theta;
    std::vector<double> grad_rho;
    std::map<int, BinaryMask> session_masks;
    BinaryMask accumulated;
    std::size_t fan_in = 1;
    bool maskable = true;
    /// Index into a MaskSet, assigned by the owning graph.
    std::size_t slot = no_slot;

    const Shape& shape() const noexcept { return theta.shape(); }
    std::size_t size() const noexcept { return theta.size(); }

    void zero_grad() {
        std::fill(grad_theta.begin(), grad_theta.end(), 0.0);
        std::fill(grad_rho.begin(), grad_rho.end(), 0.0);
    }

    const BinaryMask& mask_for(int session) const {
        auto it = session_masks.find(session);
        if (it == session_masks.end())
            throw LookupError("parameter '" + name + "' has no mask for session " + std::to_string(session));
        return it->second;
    }

    /// Stores m_s and folds it into the accumulated mask.
    void freeze_session(int session, BinaryMask mask) {
        require_same_shape(mask.shape(), shape(), "freeze_session");
        if (session_masks.count(session))
            throw SequencingError("parameter '" + name + "' already froze session " + std::to_string(session));
        accumulated = accumulate(accumulated, mask);
        session_masks.emplace(session, std::move(mask));
    }

    /// 1 - M as a real gate; the free positions of the current session.
    std::vector<double> free_gate() const {
        std::vector<double> gate(size());
        for (std::size_t i = 0; i < gate.size(); ++i) gate[i] = accumulated.test(i) ? 0.0 : 1.0;
        return gate;
    }
};

}  // namespace sncl::subnet

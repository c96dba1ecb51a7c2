#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sncl/errors.hpp"

namespace sncl::diffcore {

enum class OptimizerKind { adam, sgd };

inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw ParameterError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-tensor optimizer with an element-wise gate.
///
/// A gate value scales that element's update; a zero gate skips the element
/// completely, so frozen entries keep their value bit-for-bit and accumulate
/// no Adam moments. An empty gate means every element is free.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

    const OptimizerConfig& config() const noexcept { return cfg_; }

    void step(const void* key, std::span<double> values, std::span<const double> grad, std::span<const double> gate,
              double lr) {
        if (grad.size() != values.size() || (!gate.empty() && gate.size() != values.size()))
            throw StructuralError("optimizer step: gradient/gate size mismatch");
        if (cfg_.kind == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = gate.empty() ? 1.0 : gate[i];
                if (g == 0.0) continue;
                values[i] -= lr * (grad[i] * g);
            }
            return;
        }
        auto& st = state_[key];
        if (st.m.empty()) {
            st.m.assign(values.size(), 0.0);
            st.v.assign(values.size(), 0.0);
        }
        ++st.t;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = gate.empty() ? 1.0 : gate[i];
            if (g == 0.0) continue;
            st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * grad[i];
            st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            const double mhat = st.m[i] / c1;
            const double vhat = st.v[i] / c2;
            values[i] -= g * lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }

    /// Forgets all moment state.
    void reset() { state_.clear(); }

private:
    struct State {
        std::vector<double> m, v;
        long t = 0;
    };

    OptimizerConfig cfg_;
    std::map<const void*, State> state_;
};

}  // namespace sncl::diffcore

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sncl/data.hpp"
#include "sncl/diffcore/loss.hpp"
#include "sncl/diffcore/model.hpp"
#include "sncl/diffcore/optim.hpp"
#include "sncl/rng.hpp"
#include "sncl/subnet/mask.hpp"
#include "sncl/subnet/scored_parameter.hpp"

namespace sncl::subnet {

using diffcore::MaskSet;
using diffcore::ModelGraph;

/// theta - lr * (grad ⊙ (1 - M_prev)): plain gradient step that leaves the
/// positions of earlier subnetworks untouched.
inline Tensor gated_weight_step(const Tensor& theta, std::span<const double> grad, const BinaryMask& prev, double lr) {
    if (grad.size() != theta.size()) throw StructuralError("gated_weight_step: gradient size mismatch");
    require_same_shape(theta.shape(), prev.shape(), "gated_weight_step");
    Tensor out = theta;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!prev.test(i)) out[i] -= lr * grad[i];
    return out;
}

/// rho - lr * grad over every position; the score gradient comes from the
/// straight-through convention and has no freezing gate.
inline Tensor ste_score_step(const Tensor& rho, std::span<const double> grad, double lr) {
    if (grad.size() != rho.size()) throw StructuralError("ste_score_step: gradient size mismatch");
    Tensor out = rho;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= lr * grad[i];
    return out;
}

enum class TrainingMode {
    wsn,       // top-c subnetworks with accumulated-mask freezing
    finetune,  // dense network, nothing frozen (forgetting baseline)
};

struct WsnConfig {
    double capacity = 0.5;
    TrainingMode mode = TrainingMode::wsn;
    diffcore::OptimizerConfig optimizer{};
};

/// Drives Alg. 1 style training over a ModelGraph: masks are re-selected
/// from the scores before every step and frozen when a session ends.
class WsnLearner {
public:
    WsnLearner(ModelGraph& model, WsnConfig cfg) : model_(model), cfg_(cfg), opt_(cfg.optimizer) {
        if (!(cfg.capacity > 0.0 && cfg.capacity <= 1.0))
            throw ParameterError("capacity must lie in (0, 1], got " + std::to_string(cfg.capacity));
    }

    const WsnConfig& config() const noexcept { return cfg_; }
    ModelGraph& model() noexcept { return model_; }
    std::optional<int> active_session() const noexcept { return active_; }
    const std::vector<int>& completed_sessions() const noexcept { return completed_; }

    void begin_session(int session) {
        if (active_) throw SequencingError("session " + std::to_string(*active_) + " is still active");
        if (!completed_.empty() && session <= completed_.back())
            throw SequencingError("session " + std::to_string(session) + " arrives after session " +
                                  std::to_string(completed_.back()));
        if (!model_.has_head(session)) throw LookupError("no head for session " + std::to_string(session));
        active_ = session;
        gates_.clear();
        if (cfg_.mode == TrainingMode::wsn)
            for (auto* p : model_.maskable_parameters()) gates_.push_back(p->free_gate());
    }

    /// Top-c masks from the current scores (dense in finetune mode).
    MaskSet selection_masks() {
        if (cfg_.mode == TrainingMode::finetune) return MaskSet::dense();
        MaskSet ms;
        for (auto* p : model_.maskable_parameters()) ms.set(p->slot, select_topc_mask(p->rho, cfg_.capacity).as_real());
        return ms;
    }

    /// The frozen subnetwork of a completed session.
    MaskSet session_masks(int session) {
        if (cfg_.mode == TrainingMode::finetune) return MaskSet::dense();
        MaskSet ms;
        for (auto* p : model_.maskable_parameters()) ms.set(p->slot, p->mask_for(session).as_real());
        return ms;
    }

    /// One optimization step. `forward_backward` runs the model with the given
    /// masks, calls backward, and returns the loss.
    double step(const std::function<double(const MaskSet&)>& forward_backward, double lr) {
        if (!active_) throw SequencingError("step outside of a session");
        MaskSet masks = selection_masks();
        model_.zero_grad();
        const double loss = forward_backward(masks);
        auto params = model_.maskable_parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto* p = params[i];
            const std::span<const double> gate =
                cfg_.mode == TrainingMode::wsn ? std::span<const double>(gates_[i]) : std::span<const double>();
            opt_.step(&p->theta, p->theta.values(), p->grad_theta, gate, lr);
            snap_to_f32(p->theta.values());
            if (cfg_.mode == TrainingMode::wsn) opt_.step(&p->rho, p->rho.values(), p->grad_rho, {}, lr);
        }
        std::vector<ScoredParameter*> dense_params;
        for (auto* p : model_.trunk_parameters())
            if (!p->maskable) dense_params.push_back(p);
        for (auto* p : model_.head(*active_).parameters()) dense_params.push_back(p);
        for (auto* p : dense_params) {
            opt_.step(&p->theta, p->theta.values(), p->grad_theta, {}, lr);
            snap_to_f32(p->theta.values());
        }
        return loss;
    }

    /// Freezes m_s = top-c(rho) into every maskable parameter.
    void end_session() {
        if (!active_) throw SequencingError("end_session without an active session");
        if (cfg_.mode == TrainingMode::wsn)
            for (auto* p : model_.maskable_parameters())
                p->freeze_session(*active_, select_topc_mask(p->rho, cfg_.capacity));
        completed_.push_back(*active_);
        active_.reset();
    }

private:
    ModelGraph& model_;
    WsnConfig cfg_;
    diffcore::Optimizer opt_;
    std::optional<int> active_;
    std::vector<int> completed_;
    std::vector<std::vector<double>> gates_;
};

/// Fraction of correct argmax predictions of head `session` under `masks`.
inline double classification_accuracy(ModelGraph& model, const Tensor& x, const std::vector<int>& y, int head,
                                      const MaskSet& masks) {
    const Tensor logits = model.forward(x, head, masks, false);
    const auto pred = diffcore::argmax_rows(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(y.size());
}

struct ClassificationTraining {
    int epochs = 20;
    double lr = 0.01;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

/// Trains one classification session with the learner and freezes its masks.
/// Returns the mean training loss of every epoch.
inline std::vector<double> train_session_wsn(WsnLearner& learner, const SessionDataset& data,
                                             const ClassificationTraining& opts) {
    ModelGraph& model = learner.model();
    learner.begin_session(data.session);
    Rng rng = Rng::stream(opts.seed, 5000 + static_cast<std::uint64_t>(data.session));
    std::vector<std::size_t> order(data.train_size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> curve;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + opts.batch_size)));
            const Tensor xb = gather_rows(data.train_x, idx);
            const auto yb = gather(data.train_y, idx);
            total += learner.step(
                [&](const MaskSet& masks) {
                    const Tensor logits = model.forward(xb, data.session, masks);
                    auto loss = diffcore::softmax_cross_entropy(logits, yb);
                    model.backward(loss.grad);
                    return loss.value;
                },
                opts.lr);
            ++batches;
        }
        curve.push_back(total / static_cast<double>(std::max<std::size_t>(batches, 1)));
    }
    learner.end_session();
    return curve;
}

struct LayerReuse {
    std::string name;
    std::size_t size = 0;
    std::size_t selected = 0;     // |m_s|
    std::size_t reused = 0;       // |m_s ∧ M_{s-1}|
    std::size_t cumulative = 0;   // |M_s|
};

struct SessionReuse {
    int session = 0;
    std::vector<LayerReuse> layers;
    double capacity = 0.0;        // sum |m_s| / sum |theta|
    double cumulative = 0.0;      // sum |M_s| / sum |theta|
    double reuse_fraction = 0.0;  // sum |m_s ∧ M_{s-1}| / sum |m_s|
};

/// Capacity and weight-reuse series over the sessions stored in the masks,
/// recomputed from the per-session masks alone.
inline std::vector<SessionReuse> reuse_statistics(const std::vector<const ScoredParameter*>& params) {
    std::vector<int> sessions;
    for (const auto* p : params)
        for (const auto& [s, _] : p->session_masks)
            if (std::find(sessions.begin(), sessions.end(), s) == sessions.end()) sessions.push_back(s);
    std::sort(sessions.begin(), sessions.end());
    if (sessions.empty()) throw UsageError("reuse_statistics needs at least one trained session");

    std::vector<BinaryMask> running;
    for (const auto* p : params) running.emplace_back(p->shape());

    std::vector<SessionReuse> out;
    for (int s : sessions) {
        SessionReuse sr;
        sr.session = s;
        std::size_t total = 0, selected = 0, reused = 0, cumulative = 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const BinaryMask& m = params[i]->mask_for(s);
            LayerReuse lr;
            lr.name = params[i]->name;
            lr.size = m.size();
            lr.selected = m.popcount();
            lr.reused = overlap(m, running[i]);
            running[i] = accumulate(running[i], m);
            lr.cumulative = running[i].popcount();
            total += lr.size;
            selected += lr.selected;
            reused += lr.reused;
            cumulative += lr.cumulative;
            sr.layers.push_back(lr);
        }
        sr.capacity = static_cast<double>(selected) / static_cast<double>(total);
        sr.cumulative = static_cast<double>(cumulative) / static_cast<double>(total);
        sr.reuse_fraction = selected ? static_cast<double>(reused) / static_cast<double>(selected) : 0.0;
        out.push_back(std::move(sr));
    }
    return out;
}

}  // namespace sncl::subnet

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sncl/diffcore/layer.hpp"
#include "sncl/rng.hpp"

namespace sncl::diffcore {

/// Layers applied in order; itself a Layer so blocks can nest.
class Sequential final : public Layer {
public:
    Sequential() = default;

    Sequential& add(LayerPtr layer) {
        layers_.push_back(std::move(layer));
        return *this;
    }

    template <typename L, typename... Args>
    L& emplace(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    std::string kind() const override { return "sequential"; }

    Shape output_shape(const Shape& in) const override {
        Shape s = in;
        for (const auto& l : layers_) s = l->output_shape(s);
        return s;
    }

    Tensor forward(const Tensor& x, const MaskSet& masks, bool record) override {
        Tensor h = x;
        for (auto& l : layers_) h = l->forward(h, masks, record);
        return h;
    }

    Tensor backward(const Tensor& g) override {
        Tensor h = g;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) h = (*it)->backward(h);
        return h;
    }

    std::vector<ScoredParameter*> parameters() override {
        std::vector<ScoredParameter*> out;
        for (auto& l : layers_)
            for (auto* p : l->parameters()) out.push_back(p);
        return out;
    }

    std::size_t size() const noexcept { return layers_.size(); }
    Layer& at(std::size_t i) { return *layers_.at(i); }

private:
    std::vector<LayerPtr> layers_;
};

/// Fan-in scaled uniform U(-sqrt(1/fan_in), +sqrt(1/fan_in)); theta is
/// rounded to f32 so checkpoints store it losslessly.
inline void init_parameter(ScoredParameter& p, Rng& theta_rng, Rng& rho_rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(p.fan_in));
    for (auto& v : p.theta.storage()) v = theta_rng.uniform(-bound, bound);
    snap_to_f32(p.theta.values());
    for (auto& v : p.rho.storage()) v = rho_rng.uniform(-bound, bound);
}

/// A shared trunk followed by one head per session. The head for a forward
/// pass is always named by the caller.
class ModelGraph {
public:
    using HeadFactory = std::function<Sequential(int session)>;

    ModelGraph(Sequential trunk, HeadFactory make_head) : trunk_(std::move(trunk)), make_head_(std::move(make_head)) {
        std::size_t slot = 0;
        for (auto* p : trunk_.parameters())
            if (p->maskable) p->slot = slot++;
        slot_count_ = slot;
    }

    ModelGraph(ModelGraph&&) = default;
    ModelGraph& operator=(ModelGraph&&) = default;

    Sequential& trunk() noexcept { return trunk_; }

    /// Creates the head for `session`, initialized from (seed, session).
    Sequential& add_head(int session, std::uint64_t seed) {
        if (heads_.count(session)) throw SequencingError("head for session " + std::to_string(session) + " exists");
        auto [it, _] = heads_.emplace(session, make_head_(session));
        Rng theta_rng = Rng::stream(seed, 1000 + 2 * static_cast<std::uint64_t>(session));
        Rng rho_rng = Rng::stream(seed, 1001 + 2 * static_cast<std::uint64_t>(session));
        for (auto* p : it->second.parameters()) init_parameter(*p, theta_rng, rho_rng);
        return it->second;
    }

    bool has_head(int session) const { return heads_.count(session) != 0; }

    Sequential& head(int session) {
        auto it = heads_.find(session);
        if (it == heads_.end()) throw LookupError("no head for session " + std::to_string(session));
        return it->second;
    }

    std::vector<int> head_ids() const {
        std::vector<int> ids;
        for (const auto& [id, _] : heads_) ids.push_back(id);
        return ids;
    }

    /// Trunk then the named head.
    Tensor forward(const Tensor& x, int head_id, const MaskSet& masks, bool record = true) {
        Sequential& h = head(head_id);
        Tensor f = trunk_.forward(x, masks, record);
        Tensor y = h.forward(f, masks, record);
        if (record) last_head_ = head_id;
        return y;
    }

    /// Trunk output only (the embedding used by prototype methods).
    Tensor features(const Tensor& x, const MaskSet& masks, bool record = true) {
        Tensor f = trunk_.forward(x, masks, record);
        if (record) last_head_ = std::nullopt;
        return f;
    }

    /// Backward from the output of the last recorded forward.
    Tensor backward(const Tensor& grad_out) {
        if (!last_head_) throw UsageError("backward called without a recorded forward through a head");
        Tensor g = head(*last_head_).backward(grad_out);
        last_head_.reset();
        return trunk_.backward(g);
    }

    /// Backward from the trunk output of the last recorded `features` call.
    Tensor backward_features(const Tensor& grad_features) { return trunk_.backward(grad_features); }

    std::vector<ScoredParameter*> trunk_parameters() { return trunk_.parameters(); }

    std::vector<ScoredParameter*> maskable_parameters() {
        std::vector<ScoredParameter*> out;
        for (auto* p : trunk_.parameters())
            if (p->maskable) out.push_back(p);
        return out;
    }

    /// Trunk parameters followed by head parameters in session order.
    std::vector<ScoredParameter*> parameters() {
        auto out = trunk_.parameters();
        for (auto& [_, h] : heads_)
            for (auto* p : h.parameters()) out.push_back(p);
        return out;
    }

    std::size_t slot_count() const noexcept { return slot_count_; }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }

private:
    Sequential trunk_;
    HeadFactory make_head_;
    std::map<int, Sequential> heads_;
    std::optional<int> last_head_;
    std::size_t slot_count_ = 0;
};

/// Deterministic trunk initialization: theta and rho come from independent
/// streams of `seed`, visited in graph order.
inline void seeded_init(ModelGraph& model, std::uint64_t seed) {
    Rng theta_rng = Rng::stream(seed, 1);
    Rng rho_rng = Rng::stream(seed, 2);
    for (auto* p : model.trunk_parameters()) init_parameter(*p, theta_rng, rho_rng);
}

}  // namespace sncl::diffcore

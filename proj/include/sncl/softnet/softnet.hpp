#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "sncl/data.hpp"
#include "sncl/diffcore/loss.hpp"
#include "sncl/diffcore/model.hpp"
#include "sncl/diffcore/optim.hpp"
#include "sncl/softnet/prototypes.hpp"
#include "sncl/softnet/soft_mask.hpp"

namespace sncl::softnet {

using diffcore::MaskSet;
using diffcore::ModelGraph;

struct SoftNetConfig {
    double capacity = 0.7;
    std::uint64_t seed = 0;
    diffcore::OptimizerConfig optimizer{};
    int base_epochs = 30;
    double base_lr = 0.01;
    std::size_t batch_size = 32;
    int incremental_epochs = 6;
    double incremental_lr = 0.02;
    std::size_t exemplars_per_class = 1;
};

/// Soft-subnetwork learner for few-shot class-incremental sessions.
///
/// The trunk is the embedding network; head 1 classifies the base classes
/// during base training only. Later sessions are classified by NCM over the
/// prototype store.
class SoftNetLearner {
public:
    SoftNetLearner(ModelGraph& model, SoftNetConfig cfg) : model_(model), cfg_(cfg), opt_(cfg.optimizer) {
        if (!(cfg.capacity > 0.0 && cfg.capacity < 1.0))
            throw ParameterError("soft mask capacity must lie in (0, 1), got " + std::to_string(cfg.capacity));
    }

    const SoftNetConfig& config() const noexcept { return cfg_; }
    ModelGraph& model() noexcept { return model_; }
    PrototypeStore& store() noexcept { return store_; }
    const PrototypeStore& store() const noexcept { return store_; }
    bool base_done() const noexcept { return base_done_; }
    const std::vector<SoftMask>& frozen_masks() const noexcept { return frozen_; }

    /// Soft masks from the current scores.
    std::vector<SoftMask> current_masks() {
        std::vector<SoftMask> out;
        for (auto* p : model_.maskable_parameters()) out.push_back(build_soft_mask(p->rho, cfg_.capacity, cfg_.seed, p->slot));
        return out;
    }

    static MaskSet mask_set(const std::vector<SoftMask>& masks, const std::vector<subnet::ScoredParameter*>& params) {
        MaskSet ms;
        for (std::size_t i = 0; i < params.size(); ++i) ms.set(params[i]->slot, masks[i].values);
        return ms;
    }

    /// The frozen soft subnetwork used after base training.
    MaskSet inference_masks() const {
        if (!base_done_) throw SequencingError("soft masks are frozen by base training");
        return frozen_set_;
    }

    /// Joint cross-entropy training of theta and scores on the base session.
    /// Returns the mean loss per epoch.
    std::vector<double> base_train(const SessionDataset& data) {
        if (base_done_) throw SequencingError("base training already ran");
        if (!model_.has_head(data.session)) throw LookupError("no head for base session " + std::to_string(data.session));
        auto params = model_.maskable_parameters();
        Rng rng = Rng::stream(cfg_.seed, 7000 + static_cast<std::uint64_t>(data.session));
        std::vector<std::size_t> order(data.train_size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::vector<double> curve;
        for (int epoch = 0; epoch < cfg_.base_epochs; ++epoch) {
            rng.shuffle(order);
            double total = 0.0;
            std::size_t batches = 0;
            for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
                std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(
                                                                 std::min(order.size(), start + cfg_.batch_size)));
                const Tensor xb = gather_rows(data.train_x, idx);
                const auto yb = gather(data.train_y, idx);
                const auto soft = current_masks();
                model_.zero_grad();
                const Tensor logits = model_.forward(xb, data.session, mask_set(soft, params));
                auto loss = diffcore::softmax_cross_entropy(logits, yb);
                model_.backward(loss.grad);
                for (std::size_t i = 0; i < params.size(); ++i) {
                    auto* p = params[i];
                    opt_.step(&p->theta, p->theta.values(), p->grad_theta, soft[i].values, cfg_.base_lr);
                    snap_to_f32(p->theta.values());
                    opt_.step(&p->rho, p->rho.values(), p->grad_rho, {}, cfg_.base_lr);
                }
                for (auto* p : dense_parameters(data.session)) {
                    opt_.step(&p->theta, p->theta.values(), p->grad_theta, {}, cfg_.base_lr);
                    snap_to_f32(p->theta.values());
                }
                total += loss.value;
                ++batches;
            }
            curve.push_back(total / static_cast<double>(std::max<std::size_t>(batches, 1)));
        }

        frozen_ = current_masks();
        frozen_set_ = mask_set(frozen_, params);
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->freeze_session(data.session, frozen_[i].major);
        base_done_ = true;
        last_session_ = data.session;

        const auto classes = distinct(data.train_y);
        update_prototypes(store_, data.session, embed(data.train_x), data.train_y, classes);
        return curve;
    }

    /// Few-shot session: SGD on the minor weights (update scaled by the soft
    /// mask, major weights untouched) with the prototype metric loss over the
    /// session data plus replayed exemplars, then prototypes for the new classes.
    std::vector<double> incremental_train(const SessionDataset& data) {
        if (!base_done_) throw SequencingError("incremental training before base training");
        if (data.session <= last_session_)
            throw SequencingError("session " + std::to_string(data.session) + " arrives after session " +
                                  std::to_string(last_session_));
        const auto classes = distinct(data.train_y);
        for (int c : classes)
            if (store_.has(c)) throw DataError("class " + std::to_string(c) + " is already registered");

        auto params = model_.maskable_parameters();
        std::vector<std::vector<double>> gates;
        for (const auto& m : frozen_) {
            std::vector<double> g = m.values;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (m.is_major(i)) g[i] = 0.0;
            gates.push_back(std::move(g));
        }

        // replay set: this session's data plus exemplars of earlier sessions
        Tensor x = data.train_x;
        std::vector<int> y = data.train_y;
        for (const auto& [s, list] : store_.exemplars())
            for (const auto& e : list) {
                x = append_row(x, e.input);
                y.push_back(e.label);
            }

        update_prototypes(store_, data.session, embed(data.train_x), data.train_y, classes);
        diffcore::Optimizer sgd({diffcore::OptimizerKind::sgd});
        std::vector<double> curve;
        for (int epoch = 0; epoch < cfg_.incremental_epochs; ++epoch) {
            model_.zero_grad();
            const Tensor f = model_.features(x, frozen_set_);
            auto loss = metric_loss(f, y, store_);
            model_.backward_features(loss.grad);
            for (std::size_t i = 0; i < params.size(); ++i) {
                sgd.step(&params[i]->theta, params[i]->theta.values(), params[i]->grad_theta, gates[i],
                         cfg_.incremental_lr);
                snap_to_f32(params[i]->theta.values());
            }
            curve.push_back(loss.value);
        }

        update_prototypes(store_, data.session, embed(data.train_x), data.train_y, classes);
        for (int c : classes) {
            std::size_t kept = 0;
            for (std::size_t n = 0; n < data.train_size() && kept < cfg_.exemplars_per_class; ++n)
                if (data.train_y[n] == c) {
                    const std::size_t row = data.train_x.size() / data.train_x.dim(0);
                    store_.add_exemplar(data.session,
                                        {c, std::vector<double>(data.train_x.data() + n * row,
                                                                data.train_x.data() + (n + 1) * row)});
                    ++kept;
                }
        }
        last_session_ = data.session;
        return curve;
    }

    /// Embeddings under the frozen soft subnetwork.
    Tensor embed(const Tensor& x) { return model_.features(x, frozen_set_, false); }

    std::vector<int> predict(const Tensor& x) { return ncm_infer(embed(x), store_); }

    double accuracy(const Tensor& x, const std::vector<int>& y) {
        const auto pred = predict(x);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i] ? 1 : 0;
        return static_cast<double>(correct) / static_cast<double>(y.size());
    }

    /// Restores state produced by an earlier run (checkpoint loading).
    void restore(std::vector<SoftMask> masks, PrototypeStore store, int last_session) {
        auto params = model_.maskable_parameters();
        if (masks.size() != params.size()) throw StructuralError("soft mask count does not match the model");
        frozen_ = std::move(masks);
        frozen_set_ = mask_set(frozen_, params);
        store_ = std::move(store);
        base_done_ = true;
        last_session_ = last_session;
    }

private:
    std::vector<subnet::ScoredParameter*> dense_parameters(int head) {
        std::vector<subnet::ScoredParameter*> out;
        for (auto* p : model_.trunk_parameters())
            if (!p->maskable) out.push_back(p);
        for (auto* p : model_.head(head).parameters()) out.push_back(p);
        return out;
    }

    static std::vector<int> distinct(const std::vector<int>& labels) {
        std::set<int> s(labels.begin(), labels.end());
        return {s.begin(), s.end()};
    }

    static Tensor append_row(const Tensor& x, const std::vector<double>& row) {
        Shape s = x.shape();
        if (x.size() / s[0] != row.size()) throw StructuralError("exemplar size does not match the input");
        s[0] += 1;
        std::vector<double> v = x.storage();
        v.insert(v.end(), row.begin(), row.end());
        return Tensor(s, std::move(v));
    }

    ModelGraph& model_;
    SoftNetConfig cfg_;
    diffcore::Optimizer opt_;
    PrototypeStore store_;
    std::vector<SoftMask> frozen_;
    MaskSet frozen_set_;
    bool base_done_ = false;
    int last_session_ = 0;
};

}  // namespace sncl::softnet

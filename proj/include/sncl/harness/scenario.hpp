#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sncl/diffcore/layers.hpp"
#include "sncl/diffcore/model.hpp"
#include "sncl/fso/block.hpp"
#include "sncl/harness/checkpoint.hpp"
#include "sncl/harness/config.hpp"
#include "sncl/harness/datasets.hpp"
#include "sncl/harness/ledger.hpp"
#include "sncl/nir/train.hpp"
#include "sncl/softnet/softnet.hpp"
#include "sncl/subnet/wsn.hpp"

namespace sncl::harness {

using sncl::to_string;

using diffcore::MaskSet;
using diffcore::ModelGraph;

/// Regenerated inputs of a scenario: classification sessions or videos.
struct ScenarioData {
    std::vector<SessionDataset> sets;
    std::vector<nir::VideoSession> videos;

    int sessions() const { return static_cast<int>(sets.empty() ? videos.size() : sets.size()); }
};

inline ScenarioData make_data(const ExperimentConfig& cfg) {
    ScenarioData d;
    switch (cfg.scenario) {
        case Scenario::til: d.sets = synth_til(cfg.data, cfg.seed); break;
        case Scenario::fscil: d.sets = synth_fscil(cfg.data, cfg.seed); break;
        case Scenario::vil: d.videos = synth_vil(cfg.data, cfg.seed); break;
    }
    return d;
}

inline std::string metric_name(Scenario s) { return s == Scenario::vil ? "psnr" : "accuracy"; }

/// Embedding MLP (two ReLU layers, optional spectral block after them) with
/// one dense, non-maskable head per session.
inline ModelGraph make_classifier(const ExperimentConfig& cfg) {
    diffcore::Sequential trunk;
    trunk.emplace<diffcore::Dense>("fc1", cfg.data.dim, cfg.hidden);
    trunk.emplace<diffcore::ActivationLayer>(diffcore::Activation::relu);
    trunk.emplace<diffcore::Dense>("fc2", cfg.hidden, cfg.hidden);
    trunk.emplace<diffcore::ActivationLayer>(diffcore::Activation::relu);
    if (cfg.fso == "hidden") trunk.add(fso::make_dense_fso_block("fso", cfg.hidden, diffcore::Activation::relu));
    const std::size_t width = cfg.hidden;
    const std::size_t classes = static_cast<std::size_t>(
        cfg.scenario == Scenario::fscil ? cfg.data.base_classes : cfg.data.classes_per_session);
    ModelGraph model(std::move(trunk), [width, classes](int session) {
        diffcore::Sequential head;
        head.emplace<diffcore::Dense>("head" + std::to_string(session), width, classes, false);
        return head;
    });
    diffcore::seeded_init(model, cfg.seed);
    return model;
}

inline nir::DecoderConfig decoder_config(const ExperimentConfig& cfg) {
    nir::DecoderConfig d;
    d.fso = nir::parse_fso_placement(cfg.fso);
    std::size_t up = 1;
    for (auto r : d.factors) up *= r;
    d.height0 = cfg.data.height / up;
    d.width0 = cfg.data.width / up;
    return d;
}

/// The scenario's network with seeded trunk initialization and no heads.
inline ModelGraph build_model(const ExperimentConfig& cfg) {
    if (cfg.scenario == Scenario::vil) return nir::make_decoder(decoder_config(cfg), cfg.seed);
    return make_classifier(cfg);
}

inline softnet::SoftNetConfig softnet_config(const ExperimentConfig& cfg) {
    softnet::SoftNetConfig s;
    s.capacity = cfg.capacity;
    s.seed = cfg.seed;
    s.optimizer.kind = cfg.optimizer;
    s.base_epochs = cfg.epochs;
    s.base_lr = cfg.lr;
    s.batch_size = cfg.batch_size;
    s.incremental_epochs = cfg.incremental_epochs;
    s.incremental_lr = cfg.incremental_lr;
    s.exemplars_per_class = cfg.exemplars_per_class;
    return s;
}

/// The frozen subnetwork of `session` (dense for the finetune baseline).
inline MaskSet session_mask_set(ModelGraph& model, const ExperimentConfig& cfg, int session) {
    if (cfg.mode == subnet::TrainingMode::finetune) return MaskSet::dense();
    MaskSet ms;
    for (auto* p : model.maskable_parameters()) ms.set(p->slot, p->mask_for(session).as_real());
    return ms;
}

/// Metric of session `data_session` evaluated with its own head under the
/// subnetwork of `mask_session` (task- and video-incremental runs).
inline double evaluate_session(ModelGraph& model, const ExperimentConfig& cfg, const ScenarioData& data,
                               int data_session, int mask_session) {
    const MaskSet masks = session_mask_set(model, cfg, mask_session);
    const auto idx = static_cast<std::size_t>(data_session - 1);
    if (cfg.scenario == Scenario::vil)
        return nir::video_psnr(model, data.videos.at(idx), data.videos.size(), masks);
    const auto& d = data.sets.at(idx);
    return subnet::classification_accuracy(model, d.test_x, d.test_y, data_session, masks);
}

namespace detail {

inline double fraction_correct(const std::vector<int>& pred, const std::vector<int>& y) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i] ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(y.size());
}

/// Prototypes are rounded to f32 so the checkpoint stores them exactly.
inline void snap_prototypes(softnet::PrototypeStore& store) {
    for (const auto& [session, classes] : std::map<int, std::vector<int>>(store.session_classes()))
        for (int c : classes) {
            auto p = store.prototype(c);
            snap_to_f32(p);
            store.set(session, c, std::move(p));
        }
}

/// Every session's test data (sessions 1..upto) concatenated.
inline std::pair<Tensor, std::vector<int>> joint_test_set(const ScenarioData& data, int upto) {
    std::vector<double> xs;
    std::vector<int> ys;
    std::size_t dim = 0;
    for (int s = 1; s <= upto; ++s) {
        const auto& d = data.sets.at(static_cast<std::size_t>(s - 1));
        dim = d.test_x.dim(1);
        xs.insert(xs.end(), d.test_x.storage().begin(), d.test_x.storage().end());
        ys.insert(ys.end(), d.test_y.begin(), d.test_y.end());
    }
    return {Tensor({ys.size(), dim}, std::move(xs)), std::move(ys)};
}

inline void fill_capacity(RunLedger& ledger, ModelGraph& model) {
    std::vector<const subnet::ScoredParameter*> params;
    for (auto* p : model.maskable_parameters()) params.push_back(p);
    if (params.empty() || params.front()->session_masks.empty()) return;
    for (const auto& sr : subnet::reuse_statistics(params))
        ledger.capacity().push_back({sr.session, sr.capacity, sr.cumulative, sr.reuse_fraction});
}

}  // namespace detail

/// Row of the metric matrix for a class-incremental run after session j:
/// each earlier session's test data classified by NCM over all known classes.
inline std::vector<double> fscil_row(softnet::SoftNetLearner& learner, const ScenarioData& data, int j) {
    std::vector<double> row;
    for (int i = 1; i <= j; ++i) {
        const auto& d = data.sets.at(static_cast<std::size_t>(i - 1));
        row.push_back(detail::fraction_correct(learner.predict(d.test_x), d.test_y));
    }
    return row;
}

inline double fscil_all_class_accuracy(softnet::SoftNetLearner& learner, const ScenarioData& data, int upto) {
    auto [x, y] = detail::joint_test_set(data, upto);
    return detail::fraction_correct(learner.predict(x), y);
}

/// Writes the trained state: every parameter as an f32 record with its frozen
/// session masks, plus prototypes and exemplars for class-incremental runs.
inline Checkpoint make_checkpoint(const ExperimentConfig& cfg, ModelGraph& model, const std::vector<int>& completed,
                                  const softnet::PrototypeStore* store = nullptr) {
    Checkpoint ck;
    ck.config_hash = config_hash(cfg);
    ck.meta["config"] = to_json(cfg);
    ck.meta["completed_sessions"] = completed;
    ck.meta["heads"] = model.head_ids();
    for (auto* p : model.parameters()) {
        auto& rec = ck.add_f32("param/" + p->name, p->shape(), p->theta.values());
        for (const auto& [s, m] : p->session_masks) rec.masks.push_back({s, m});
    }
    if (store) {
        nlohmann::json sessions = nlohmann::json::object(), labels = nlohmann::json::object();
        for (const auto& [s, classes] : store->session_classes()) {
            sessions[std::to_string(s)] = classes;
            for (int c : classes) {
                const auto& p = store->prototype(c);
                ck.add_f32("proto/" + std::to_string(c), {p.size()}, p);
            }
        }
        for (const auto& [s, list] : store->exemplars()) {
            if (list.empty()) continue;
            std::vector<double> rows;
            std::vector<int> ls;
            for (const auto& e : list) {
                rows.insert(rows.end(), e.input.begin(), e.input.end());
                ls.push_back(e.label);
            }
            ck.add_f32("exemplar/" + std::to_string(s), {list.size(), list.front().input.size()}, rows);
            labels[std::to_string(s)] = ls;
        }
        ck.meta["prototype_sessions"] = sessions;
        ck.meta["exemplar_labels"] = labels;
    }
    return ck;
}

/// Result of one run: the ledger, the final checkpoint and the wall time.
struct RunResult {
    ExperimentConfig config;
    RunLedger ledger;
    Checkpoint checkpoint;
    double wall_seconds = 0.0;
};

/// Called after every session with the session id and the model.
using SessionHook = std::function<void(int session, ModelGraph& model)>;

/// Trains every session in order and evaluates all earlier sessions after
/// each one.
inline RunResult run_scenario(const ExperimentConfig& cfg, const SessionHook& after_session = {}) {
    validate(cfg);
    const auto start = std::chrono::steady_clock::now();
    const ScenarioData data = make_data(cfg);
    ModelGraph model = build_model(cfg);
    RunResult out{cfg, RunLedger(metric_name(cfg.scenario)), {}, 0.0};
    RunLedger& ledger = out.ledger;
    std::vector<int> completed;
    const int sessions = data.sessions();

    if (cfg.scenario == Scenario::fscil) {
        model.add_head(1, cfg.seed);
        softnet::SoftNetLearner learner(model, softnet_config(cfg));
        for (int j = 1; j <= sessions; ++j) {
            const auto& d = data.sets.at(static_cast<std::size_t>(j - 1));
            const auto curve = j == 1 ? learner.base_train(d) : learner.incremental_train(d);
            detail::snap_prototypes(learner.store());
            for (std::size_t e = 0; e < curve.size(); ++e)
                ledger.curves().push_back({j, static_cast<int>(e), curve[e], std::nullopt});
            completed.push_back(j);
            ledger.append_row(fscil_row(learner, data, j));
            if (after_session) after_session(j, model);
        }
        ledger.extras()["all_class_accuracy"] = fscil_all_class_accuracy(learner, data, sessions);
        detail::fill_capacity(ledger, model);
        out.checkpoint = make_checkpoint(cfg, model, completed, &learner.store());
    } else {
        subnet::WsnConfig wc;
        wc.capacity = cfg.capacity;
        wc.mode = cfg.mode;
        wc.optimizer.kind = cfg.optimizer;
        subnet::WsnLearner learner(model, wc);
        for (int j = 1; j <= sessions; ++j) {
            model.add_head(j, cfg.seed);
            if (cfg.scenario == Scenario::til) {
                const auto curve = subnet::train_session_wsn(
                    learner, data.sets.at(static_cast<std::size_t>(j - 1)),
                    {cfg.epochs, cfg.lr, cfg.batch_size, cfg.seed});
                for (std::size_t e = 0; e < curve.size(); ++e)
                    ledger.curves().push_back({j, static_cast<int>(e), curve[e], std::nullopt});
            } else {
                const auto& video = data.videos.at(static_cast<std::size_t>(j - 1));
                const nir::VideoTraining opts{cfg.epochs, cfg.lr, cfg.warmup_fraction, cfg.alpha, cfg.seed};
                nir::train_video_session(learner, video, data.videos.size(), opts, [&](int epoch, double loss) {
                    CurvePoint pt{j, epoch, loss, std::nullopt};
                    if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)
                        pt.metric = nir::video_psnr(model, video, data.videos.size(), learner.selection_masks());
                    ledger.curves().push_back(pt);
                });
            }
            completed.push_back(j);
            std::vector<double> row;
            for (int i = 1; i <= j; ++i) row.push_back(evaluate_session(model, cfg, data, i, i));
            ledger.append_row(std::move(row));
            if (after_session) after_session(j, model);
        }
        detail::fill_capacity(ledger, model);
        out.checkpoint = make_checkpoint(cfg, model, completed);
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// A model rebuilt from a checkpoint, with its regenerated data.
struct Restored {
    ExperimentConfig config;
    ModelGraph model;
    ScenarioData data;
    std::vector<int> completed;
    std::optional<softnet::SoftNetLearner> learner;  // class-incremental runs only
};

/// Rebuilds the model from the stored config, then loads weights, masks and
/// (for class-incremental runs) the prototype store.
inline std::unique_ptr<Restored> restore(const Checkpoint& ck) {
    if (!ck.meta.contains("config")) throw FormatError("checkpoint metadata has no config");
    ExperimentConfig cfg = from_json(ck.meta.at("config"));
    if (config_hash(cfg) != ck.config_hash) throw FormatError("checkpoint config hash does not match its metadata");
    auto r = std::unique_ptr<Restored>(new Restored{cfg, build_model(cfg), make_data(cfg), {}, std::nullopt});
    r->completed = ck.meta.at("completed_sessions").get<std::vector<int>>();
    for (int h : ck.meta.at("heads").get<std::vector<int>>()) r->model.add_head(h, cfg.seed);
    for (auto* p : r->model.parameters()) {
        const Record& rec = ck.at("param/" + p->name);
        if (rec.shape != p->shape())
            throw FormatError("checkpoint record '" + rec.name + "' has shape " + to_string(rec.shape) + ", model expects " +
                              to_string(p->shape()));
        auto v = rec.values();
        snap_to_f32(v);
        std::copy(v.begin(), v.end(), p->theta.storage().begin());
        for (const auto& m : rec.masks) p->freeze_session(m.session, m.mask);
    }
    if (cfg.scenario == Scenario::fscil) {
        softnet::PrototypeStore store;
        for (const auto& [key, classes] : ck.meta.at("prototype_sessions").items())
            for (int c : classes.get<std::vector<int>>()) {
                auto p = ck.at("proto/" + std::to_string(c)).values();
                store.set(std::stoi(key), c, std::move(p));
            }
        for (const auto& [key, labels] : ck.meta.at("exemplar_labels").items()) {
            const Record& rec = ck.at("exemplar/" + key);
            const auto rows = rec.values();
            const auto ls = labels.get<std::vector<int>>();
            const std::size_t dim = rec.shape.at(1);
            for (std::size_t n = 0; n < ls.size(); ++n)
                store.add_exemplar(std::stoi(key), {ls[n], std::vector<double>(rows.begin() + static_cast<std::ptrdiff_t>(n * dim),
                                                                          rows.begin() + static_cast<std::ptrdiff_t>((n + 1) * dim))});
        }
        auto params = r->model.maskable_parameters();
        std::vector<softnet::SoftMask> masks;
        for (auto* p : params) {
            softnet::SoftMask m;
            m.major = p->mask_for(1);
            m.values = softnet::minor_draws(p->size(), cfg.seed, p->slot);
            m.seed = cfg.seed;
            m.stream = p->slot;
            for (std::size_t i = 0; i < m.values.size(); ++i)
                if (m.major.test(i)) m.values[i] = 1.0;
            masks.push_back(std::move(m));
        }
        r->learner.emplace(r->model, softnet_config(cfg));
        r->learner->restore(std::move(masks), std::move(store), r->completed.empty() ? 0 : r->completed.back());
    }
    return r;
}

/// Final-row metrics recomputed from a checkpoint.
struct Evaluation {
    ExperimentConfig config;
    std::string metric;
    std::vector<double> final_row;
    double acc = 0.0;
    std::map<std::string, double> extras;
};

inline Evaluation evaluate_checkpoint(const Checkpoint& ck) {
    auto r = restore(ck);
    Evaluation ev{r->config, metric_name(r->config.scenario), {}, 0.0, {}};
    const int last = r->completed.empty() ? 0 : r->completed.back();
    if (last == 0) throw UsageError("checkpoint holds no trained session");
    if (r->config.scenario == Scenario::fscil) {
        ev.final_row = fscil_row(*r->learner, r->data, last);
        ev.extras["all_class_accuracy"] = fscil_all_class_accuracy(*r->learner, r->data, last);
    } else {
        for (int i = 1; i <= last; ++i) ev.final_row.push_back(evaluate_session(r->model, r->config, r->data, i, i));
    }
    for (double v : ev.final_row) ev.acc += v;
    ev.acc /= static_cast<double>(ev.final_row.size());
    return ev;
}

/// Transfer matrix of a task- or video-incremental checkpoint: session i's
/// data under the subnetwork of min(i, j), using the final weights.
inline Matrix checkpoint_transfer_matrix(const Checkpoint& ck) {
    auto r = restore(ck);
    if (r->config.scenario == Scenario::fscil)
        throw UsageError("transfer matrix needs one subnetwork per session; class-incremental runs share one");
    const int n = r->completed.empty() ? 0 : r->completed.back();
    return transfer_matrix(n, [&](int data_session, int mask_session) {
        return evaluate_session(r->model, r->config, r->data, data_session, mask_session);
    });
}

}  // namespace sncl::harness

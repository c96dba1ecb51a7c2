#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "sncl/diffcore/loss.hpp"
#include "sncl/errors.hpp"
#include "sncl/tensor.hpp"

namespace sncl::softnet {

/// One stored raw input kept for replay in later sessions.
struct Exemplar {
    int label = 0;
    std::vector<double> input;
};

/// Class prototypes (mean embeddings), the classes each session introduced,
/// and the exemplars each session stored.
class PrototypeStore {
public:
    bool has(int cls) const { return protos_.count(cls) != 0; }
    const std::vector<double>& prototype(int cls) const {
        auto it = protos_.find(cls);
        if (it == protos_.end()) throw LookupError("no prototype for class " + std::to_string(cls));
        return it->second;
    }
    const std::map<int, std::vector<double>>& prototypes() const noexcept { return protos_; }
    const std::map<int, std::vector<int>>& session_classes() const noexcept { return sessions_; }
    const std::map<int, std::vector<Exemplar>>& exemplars() const noexcept { return exemplars_; }
    std::size_t size() const noexcept { return protos_.size(); }
    bool empty() const noexcept { return protos_.empty(); }

    std::vector<int> class_ids() const {
        std::vector<int> ids;
        for (const auto& [id, _] : protos_) ids.push_back(id);
        return ids;
    }

    /// Sets (or refreshes) a prototype; registering a class records its session.
    void set(int session, int cls, std::vector<double> p) {
        if (!protos_.empty() && p.size() != protos_.begin()->second.size())
            throw StructuralError("prototype dimension mismatch");
        auto& reg = sessions_[session];
        if (std::find(reg.begin(), reg.end(), cls) == reg.end()) {
            for (const auto& [s, classes] : sessions_)
                if (s != session && std::find(classes.begin(), classes.end(), cls) != classes.end())
                    throw DataError("class " + std::to_string(cls) + " already belongs to session " + std::to_string(s));
            reg.push_back(cls);
        }
        protos_[cls] = std::move(p);
    }

    void add_exemplar(int session, Exemplar e) { exemplars_[session].push_back(std::move(e)); }

private:
    std::map<int, std::vector<double>> protos_;
    std::map<int, std::vector<int>> sessions_;
    std::map<int, std::vector<Exemplar>> exemplars_;
};

/// Mean embedding per class of `classes` over rows of `features` (N, D).
inline std::map<int, std::vector<double>> class_means(const Tensor& features, const std::vector<int>& labels,
                                                      const std::vector<int>& classes) {
    if (features.rank() != 2 || features.dim(0) != labels.size())
        throw StructuralError("class means expect (N, D) features and N labels");
    const std::size_t D = features.dim(1);
    std::map<int, std::vector<double>> sums;
    std::map<int, std::size_t> counts;
    for (int c : classes) {
        sums[c].assign(D, 0.0);
        counts[c] = 0;
    }
    for (std::size_t n = 0; n < labels.size(); ++n) {
        auto it = sums.find(labels[n]);
        if (it == sums.end()) continue;
        for (std::size_t d = 0; d < D; ++d) it->second[d] += features[n * D + d];
        ++counts[labels[n]];
    }
    for (auto& [c, s] : sums) {
        if (counts[c] == 0) throw DataError("class " + std::to_string(c) + " has no samples");
        for (auto& v : s) v /= static_cast<double>(counts[c]);
    }
    return sums;
}

/// p_o = mean embedding of class o, registered under `session`.
inline void update_prototypes(PrototypeStore& store, int session, const Tensor& features,
                              const std::vector<int>& labels, const std::vector<int>& classes) {
    for (auto& [c, p] : class_means(features, labels, classes)) store.set(session, c, std::move(p));
}

/// Nearest class mean by Euclidean distance; equal distances go to the lower class id.
inline std::vector<int> ncm_infer(const Tensor& features, const PrototypeStore& store) {
    if (store.empty()) throw UsageError("NCM inference needs at least one prototype");
    const std::size_t D = features.dim(1);
    std::vector<int> out(features.dim(0));
    for (std::size_t n = 0; n < out.size(); ++n) {
        const double* f = features.data() + n * D;
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (const auto& [c, p] : store.prototypes()) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < D; ++d) d2 += (f[d] - p[d]) * (f[d] - p[d]);
            if (d2 < best) {
                best = d2;
                arg = c;
            }
        }
        out[n] = arg;
    }
    return out;
}

/// Guard added to vector norms inside the cosine distance.
inline constexpr double norm_epsilon = 1e-12;

/// Mean over the batch of -log softmax_o(-d(p_o, f(x)))[y] with the cosine
/// distance d = 1 - cos over every stored class; gradient w.r.t. the features.
inline diffcore::LossValue metric_loss(const Tensor& features, const std::vector<int>& labels,
                                       const PrototypeStore& store) {
    if (features.rank() != 2 || features.dim(0) != labels.size())
        throw StructuralError("metric loss expects (B, D) features and B labels");
    if (store.empty()) throw UsageError("metric loss needs prototypes");
    const std::size_t B = features.dim(0), D = features.dim(1);
    const auto ids = store.class_ids();
    const std::size_t K = ids.size();
    std::vector<const std::vector<double>*> protos;
    std::vector<double> pnorm;
    for (int c : ids) {
        protos.push_back(&store.prototype(c));
        if (protos.back()->size() != D) throw StructuralError("prototype and feature dimensions differ");
        double s = 0.0;
        for (double v : *protos.back()) s += v * v;
        pnorm.push_back(std::sqrt(s) + norm_epsilon);
    }

    diffcore::LossValue out{0.0, Tensor(features.shape())};
    std::vector<double> cosv(K), dots(K), prob(K);
    for (std::size_t n = 0; n < B; ++n) {
        const double* f = features.data() + n * D;
        const auto yit = std::find(ids.begin(), ids.end(), labels[n]);
        if (yit == ids.end()) throw DataError("no prototype for label " + std::to_string(labels[n]));
        const std::size_t y = static_cast<std::size_t>(yit - ids.begin());
        double fs = 0.0;
        for (std::size_t d = 0; d < D; ++d) fs += f[d] * f[d];
        const double fn = std::sqrt(fs);
        const double a = fn + norm_epsilon;
        for (std::size_t k = 0; k < K; ++k) {
            double dot = 0.0;
            for (std::size_t d = 0; d < D; ++d) dot += (*protos[k])[d] * f[d];
            dots[k] = dot;
            cosv[k] = dot / (pnorm[k] * a);
        }
        // logits are -d = cos - 1; the constant shift cancels in the softmax
        const double zmax = *std::max_element(cosv.begin(), cosv.end());
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) denom += std::exp(cosv[k] - zmax);
        out.value += std::log(denom) + zmax - cosv[y];
        for (std::size_t k = 0; k < K; ++k) prob[k] = std::exp(cosv[k] - zmax) / denom;

        double* g = out.grad.data() + n * D;
        for (std::size_t k = 0; k < K; ++k) {
            const double coef = (prob[k] - (k == y ? 1.0 : 0.0)) / static_cast<double>(B);
            if (coef == 0.0) continue;
            const double s1 = coef / (pnorm[k] * a);
            const double s2 = fn > 0.0 ? coef * dots[k] / (pnorm[k] * a * a * fn) : 0.0;
            for (std::size_t d = 0; d < D; ++d) g[d] += s1 * (*protos[k])[d] - s2 * f[d];
        }
    }
    out.value /= static_cast<double>(B);
    return out;
}

}  // namespace sncl::softnet

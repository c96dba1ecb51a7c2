#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sncl/data.hpp"
#include "sncl/errors.hpp"
#include "sncl/harness/config.hpp"
#include "sncl/nir/video.hpp"
#include "sncl/rng.hpp"

namespace sncl::harness {

namespace detail {

inline std::vector<double> normal_vector(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    return v;
}

inline std::vector<double> unit_vector(Rng& rng, std::size_t dim) {
    for (;;) {
        auto v = normal_vector(rng, dim);
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n < 1e-12) continue;
        for (auto& x : v) x /= n;
        return v;
    }
}

/// k offsets of unit-free size: +-u for two classes, otherwise points drawn
/// uniformly in the radius-k ball with every pairwise distance at least 2.
inline std::vector<std::vector<double>> class_offsets(Rng& rng, std::size_t k, std::size_t dim) {
    if (k == 2) {
        auto u = unit_vector(rng, dim);
        auto v = u;
        for (auto& x : v) x = -x;
        return {u, v};
    }
    constexpr int attempts = 20000;
    const double radius = static_cast<double>(k);
    std::vector<std::vector<double>> out;
    int tries = 0;
    while (out.size() < k) {
        if (++tries > attempts)
            throw DataError("more classes than representable clusters: cannot place " + std::to_string(k) +
                            " separated classes in " + std::to_string(dim) + " dimensions");
        auto dir = unit_vector(rng, dim);
        const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
        for (auto& x : dir) x *= r;
        bool ok = true;
        for (const auto& p : out) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) d2 += (p[j] - dir[j]) * (p[j] - dir[j]);
            if (d2 < 4.0) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(std::move(dir));
    }
    return out;
}

/// Unit-variance Gaussian samples around each mean, `k` per class, classes in order.
inline void sample_classes(Rng& rng, const std::vector<std::vector<double>>& means, const std::vector<int>& labels,
                           std::size_t k, Tensor& x, std::vector<int>& y) {
    const std::size_t dim = means.front().size();
    x = Tensor({means.size() * k, dim});
    y.clear();
    std::size_t row = 0;
    for (std::size_t c = 0; c < means.size(); ++c)
        for (std::size_t i = 0; i < k; ++i, ++row) {
            y.push_back(labels[c]);
            for (std::size_t j = 0; j < dim; ++j) x[row * dim + j] = means[c][j] + rng.normal();
        }
}

}  // namespace detail

/// Task-incremental stream: each session has its own centre and orientation;
/// class means sit `separation` sigmas from the centre. Labels are session-local.
inline std::vector<SessionDataset> synth_til(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.sessions < 1 || spec.classes_per_session < 2 || spec.dim == 0 || spec.train_per_class == 0 ||
        spec.test_per_class == 0 || !(spec.separation > 0.0))
        throw DataError("invalid task-incremental dataset spec");
    const std::size_t k = static_cast<std::size_t>(spec.classes_per_session);
    std::vector<SessionDataset> out;
    for (int s = 1; s <= spec.sessions; ++s) {
        Rng geo = Rng::stream(seed, 100 + static_cast<std::uint64_t>(s));
        const auto centre = detail::normal_vector(geo, spec.dim);
        auto means = detail::class_offsets(geo, k, spec.dim);
        std::vector<int> labels;
        for (std::size_t c = 0; c < k; ++c) {
            labels.push_back(static_cast<int>(c));
            for (std::size_t j = 0; j < spec.dim; ++j) means[c][j] = centre[j] + spec.separation * means[c][j];
        }
        Rng draw = Rng::stream(seed, 200 + static_cast<std::uint64_t>(s));
        SessionDataset d;
        d.session = s;
        d.num_classes = k;
        detail::sample_classes(draw, means, labels, spec.train_per_class, d.train_x, d.train_y);
        detail::sample_classes(draw, means, labels, spec.test_per_class, d.test_x, d.test_y);
        out.push_back(std::move(d));
    }
    return out;
}

/// Few-shot class-incremental stream: session 1 holds base_classes classes
/// with train_per_class samples each, then `sessions` sessions of ways x shots.
/// Labels are global class ids; all classes share one geometry.
inline std::vector<SessionDataset> synth_fscil(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.base_classes < 2 || spec.ways < 1 || spec.shots == 0 || spec.sessions < 0 || spec.dim == 0 ||
        spec.train_per_class == 0 || spec.test_per_class == 0 || !(spec.separation > 0.0))
        throw DataError("invalid class-incremental dataset spec");
    const std::size_t total = static_cast<std::size_t>(spec.base_classes + spec.sessions * spec.ways);
    Rng geo = Rng::stream(seed, 100);
    auto means = detail::class_offsets(geo, total, spec.dim);
    for (auto& m : means)
        for (auto& v : m) v *= spec.separation;

    std::vector<SessionDataset> out;
    int first = 0;
    for (int s = 1; s <= spec.sessions + 1; ++s) {
        const int count = s == 1 ? spec.base_classes : spec.ways;
        std::vector<std::vector<double>> m(means.begin() + first, means.begin() + first + count);
        std::vector<int> labels;
        for (int c = 0; c < count; ++c) labels.push_back(first + c);
        Rng draw = Rng::stream(seed, 200 + static_cast<std::uint64_t>(s));
        SessionDataset d;
        d.session = s;
        d.num_classes = static_cast<std::size_t>(count);
        detail::sample_classes(draw, m, labels, s == 1 ? spec.train_per_class : spec.shots, d.train_x, d.train_y);
        detail::sample_classes(draw, m, labels, spec.test_per_class, d.test_x, d.test_y);
        out.push_back(std::move(d));
        first += count;
    }
    return out;
}

inline std::vector<nir::VideoSession> synth_vil(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.sessions < 1) throw DataError("invalid video dataset spec");
    std::vector<nir::VideoSession> out;
    for (int s = 1; s <= spec.sessions; ++s) out.push_back(nir::synth_video(s, spec.frames, spec.height, spec.width, seed));
    return out;
}

}  // namespace sncl::harness

#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <vector>

#include "sncl/nir/decoder.hpp"
#include "sncl/nir/quality.hpp"
#include "sncl/nir/video.hpp"
#include "sncl/subnet/wsn.hpp"

namespace sncl::nir {

struct VideoTraining {
    int epochs = 300;
    double lr = 5e-4;
    double warmup_fraction = 0.2;
    double alpha = 0.7;
    std::uint64_t seed = 0;
};

inline int warmup_epochs(const VideoTraining& opts) {
    return static_cast<int>(std::lround(opts.warmup_fraction * opts.epochs));
}

/// Linear warmup to `lr` over the warmup epochs, then cosine annealing.
inline double scheduled_lr(double lr, int epoch, int epochs, int warmup) {
    if (epoch < warmup) return lr * static_cast<double>(epoch + 1) / static_cast<double>(warmup);
    const int span = std::max(1, epochs - warmup);
    return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch - warmup) / span));
}

/// Embedding batch for frames `frames` of `video` among `sessions` sessions.
inline Tensor video_embeddings(const VideoSession& video, std::size_t sessions, const std::vector<std::size_t>& frames) {
    return encode_frames(static_cast<std::size_t>(video.session - 1), sessions, frames, video.frame_count());
}

/// All frames of `video` decoded with head video.session under `masks`, as (T, 3, H, W).
inline Tensor reconstruct(ModelGraph& model, const VideoSession& video, std::size_t sessions, const MaskSet& masks) {
    std::vector<std::size_t> all(video.frame_count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return model.forward(video_embeddings(video, sessions, all), video.session, masks, false);
}

/// Mean per-frame PSNR of the reconstruction.
inline double video_psnr(ModelGraph& model, const VideoSession& video, std::size_t sessions, const MaskSet& masks) {
    const Tensor rec = reconstruct(model, video, sessions, masks);
    const std::size_t n = rec.size() / video.frame_count();
    double total = 0.0;
    for (std::size_t t = 0; t < video.frame_count(); ++t) {
        const Tensor a({n}, std::vector<double>(video.frames.data() + t * n, video.frames.data() + (t + 1) * n));
        const Tensor b({n}, std::vector<double>(rec.data() + t * n, rec.data() + (t + 1) * n));
        total += psnr(a, b);
    }
    return total / static_cast<double>(video.frame_count());
}

/// Trains one video session frame by frame (batch size 1) and freezes its
/// masks. Returns the mean loss of every epoch; `on_epoch` sees each epoch's
/// index and mean loss before the masks are frozen.
inline std::vector<double> train_video_session(
    subnet::WsnLearner& learner, const VideoSession& video, std::size_t sessions, const VideoTraining& opts,
    const std::function<void(int epoch, double loss)>& on_epoch = {}) {
    ModelGraph& model = learner.model();
    learner.begin_session(video.session);
    Rng rng = Rng::stream(opts.seed, 6000 + static_cast<std::uint64_t>(video.session));
    std::vector<std::size_t> order(video.frame_count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const Tensor embeddings = video_embeddings(video, sessions, order);
    const int warmup = warmup_epochs(opts);
    std::vector<double> curve;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        const double lr = scheduled_lr(opts.lr, epoch, opts.epochs, warmup);
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t t : order) {
            const Tensor e({1, encoding_dim}, std::vector<double>(embeddings.data() + t * encoding_dim,
                                                                  embeddings.data() + (t + 1) * encoding_dim));
            const Tensor target = video.frame(t);
            total += learner.step(
                [&](const MaskSet& masks) {
                    const Tensor y = model.forward(e, video.session, masks);
                    auto loss = vil_loss(target, y, opts.alpha);
                    model.backward(loss.grad);
                    return loss.value;
                },
                lr);
        }
        curve.push_back(total / static_cast<double>(order.size()));
        if (on_epoch) on_epoch(epoch, curve.back());
    }
    learner.end_session();
    return curve;
}

}  // namespace sncl::nir

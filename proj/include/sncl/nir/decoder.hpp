#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sncl/diffcore/layers.hpp"
#include "sncl/diffcore/model.hpp"
#include "sncl/fso/block.hpp"
#include "sncl/nir/encoding.hpp"

namespace sncl::nir {

using diffcore::Activation;
using diffcore::MaskSet;
using diffcore::ModelGraph;
using diffcore::Sequential;

using sncl::to_string;

/// Where the residual spectral block sits in the decoder.
enum class FsoPlacement {
    none,
    nerv2,  // after upscale block 2
    nerv3,  // after upscale block 3
};

inline FsoPlacement parse_fso_placement(const std::string& s) {
    if (s == "none") return FsoPlacement::none;
    if (s == "nerv2" || s == "f-nerv2") return FsoPlacement::nerv2;
    if (s == "nerv3" || s == "f-nerv3") return FsoPlacement::nerv3;
    throw ParameterError("unknown FSO placement '" + s + "' (expected none, nerv2, nerv3)");
}

inline std::string to_string(FsoPlacement p) {
    switch (p) {
        case FsoPlacement::none: return "none";
        case FsoPlacement::nerv2: return "nerv2";
        case FsoPlacement::nerv3: return "nerv3";
    }
    return "?";
}

struct DecoderConfig {
    std::size_t stem_hidden = 256;
    std::size_t channels0 = 16;
    std::size_t height0 = 4;
    std::size_t width0 = 4;
    std::vector<std::size_t> factors{2, 2, 2};
    std::vector<std::size_t> channels{16, 8, 8};  // output channels of each upscale block
    FsoPlacement fso = FsoPlacement::none;
    std::optional<std::size_t> fso_modes;

    std::size_t height() const {
        std::size_t h = height0;
        for (auto r : factors) h *= r;
        return h;
    }
    std::size_t width() const {
        std::size_t w = width0;
        for (auto r : factors) w *= r;
        return w;
    }

    void validate() const {
        if (factors.empty() || factors.size() != channels.size())
            throw ParameterError("decoder needs one channel count per upscale factor");
        for (auto r : factors)
            if (r == 0) throw ParameterError("upscale factors must be positive");
        if (channels0 == 0 || height0 == 0 || width0 == 0 || stem_hidden == 0)
            throw ParameterError("decoder dimensions must be positive");
        const std::size_t need = fso == FsoPlacement::nerv2 ? 2 : (fso == FsoPlacement::nerv3 ? 3 : 0);
        if (need > factors.size())
            throw ParameterError("FSO placement " + to_string(fso) + " needs at least " + std::to_string(need) +
                                 " upscale blocks");
    }
};

/// Stem MLP -> (C0, h0, w0) map -> conv + pixel shuffle blocks (with an
/// optional residual FSO block) -> per-session RGB conv head with sigmoid.
/// Output is (B, 3, H, W).
inline ModelGraph make_decoder(const DecoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Sequential trunk;
    const std::size_t map_size = cfg.channels0 * cfg.height0 * cfg.width0;
    trunk.emplace<diffcore::Dense>("stem.0", encoding_dim, cfg.stem_hidden);
    trunk.emplace<diffcore::ActivationLayer>(Activation::gelu);
    trunk.emplace<diffcore::Dense>("stem.1", cfg.stem_hidden, map_size);
    trunk.emplace<diffcore::ActivationLayer>(Activation::gelu);
    trunk.emplace<diffcore::Reshape>(Shape{cfg.channels0, cfg.height0, cfg.width0});

    std::size_t ch = cfg.channels0, h = cfg.height0, w = cfg.width0;
    for (std::size_t k = 0; k < cfg.factors.size(); ++k) {
        const std::size_t r = cfg.factors[k], out = cfg.channels[k];
        const std::string name = "block" + std::to_string(k + 1);
        trunk.emplace<diffcore::Conv2d>(name + ".conv", ch, out * r * r, 3);
        trunk.emplace<diffcore::PixelShuffle>(r);
        trunk.emplace<diffcore::ActivationLayer>(Activation::gelu);
        ch = out;
        h *= r;
        w *= r;
        const bool fso_here = (cfg.fso == FsoPlacement::nerv2 && k == 1) || (cfg.fso == FsoPlacement::nerv3 && k == 2);
        if (fso_here) {
            std::optional<std::vector<std::size_t>> modes;
            if (cfg.fso_modes) modes = std::vector<std::size_t>{*cfg.fso_modes, *cfg.fso_modes};
            auto spectral = std::make_unique<fso::SpectralConv>(name + ".fso", ch, ch, std::vector<std::size_t>{h, w}, modes);
            trunk.add(std::make_unique<fso::FsoBlock>(std::move(spectral), fso::ParallelPath::identity, Activation::gelu));
        }
    }

    const std::size_t last = ch;
    ModelGraph model(std::move(trunk), [last](int session) {
        Sequential head;
        head.emplace<diffcore::Conv2d>("head" + std::to_string(session) + ".rgb", last, 3, 3, 1, std::nullopt, false);
        head.emplace<diffcore::ActivationLayer>(Activation::sigmoid);
        return head;
    });
    diffcore::seeded_init(model, seed);
    return model;
}

/// (B, 3, H, W) -> (B, H, W, 3).
inline Tensor to_hwc(const Tensor& chw) {
    if (chw.rank() != 4) throw StructuralError("to_hwc expects (B, C, H, W), got " + to_string(chw.shape()));
    const std::size_t B = chw.dim(0), C = chw.dim(1), H = chw.dim(2), W = chw.dim(3);
    Tensor out({B, H, W, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H * W; ++i) out[(b * H * W + i) * C + c] = chw[(b * C + c) * H * W + i];
    return out;
}

/// Decodes one frame from its embedding with head `session`; returns (H, W, 3).
inline Tensor decode_frame(ModelGraph& model, const std::vector<double>& embedding, int session, const MaskSet& masks) {
    if (embedding.size() != encoding_dim)
        throw StructuralError("decode_frame expects a " + std::to_string(encoding_dim) + "-dim embedding");
    const Tensor y = model.forward(Tensor({1, encoding_dim}, embedding), session, masks, false);
    const Tensor hwc = to_hwc(y);
    return hwc.reshaped({hwc.dim(1), hwc.dim(2), hwc.dim(3)});
}

}  // namespace sncl::nir

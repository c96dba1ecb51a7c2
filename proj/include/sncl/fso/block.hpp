#pragma once

#include <memory>
#include <optional>
#include <string>

#include "sncl/diffcore/layers.hpp"
#include "sncl/fso/spectral.hpp"

namespace sncl::fso {

using diffcore::Activation;
using diffcore::LayerPtr;

/// What runs in parallel with the spectral operator inside an FsoBlock.
enum class ParallelPath {
    layer,     // a trainable layer (dense or conv)
    identity,  // residual skip
    none,      // spectral operator only
};

/// out = act(path(x) + fso(x)).
class FsoBlock final : public Layer {
public:
    FsoBlock(std::unique_ptr<SpectralConv> spectral, LayerPtr path, Activation act)
        : spectral_(std::move(spectral)), path_(std::move(path)), kind_(ParallelPath::layer), act_(act) {
        if (!path_) throw StructuralError("FsoBlock: parallel layer is null");
    }

    FsoBlock(std::unique_ptr<SpectralConv> spectral, ParallelPath kind, Activation act)
        : spectral_(std::move(spectral)), kind_(kind), act_(act) {
        if (kind == ParallelPath::layer) throw StructuralError("FsoBlock: a layer path needs a layer");
        if (kind == ParallelPath::identity && spectral_->in_channels() != spectral_->out_channels())
            throw StructuralError("FsoBlock: identity path needs equal channel counts");
    }

    std::string kind() const override { return "fso_block"; }
    SpectralConv& spectral() noexcept { return *spectral_; }
    ParallelPath path_kind() const noexcept { return kind_; }

    Shape output_shape(const Shape& in) const override {
        const Shape s = spectral_->output_shape(in);
        if (path_ && path_->output_shape(in) != s)
            throw StructuralError("FsoBlock: parallel path output " + to_string(path_->output_shape(in)) +
                                  " differs from spectral output " + to_string(s));
        return s;
    }

    Tensor forward(const Tensor& x, const MaskSet& masks, bool record) override {
        Tensor z = spectral_->forward(x, masks, record);
        if (kind_ == ParallelPath::layer) {
            const Tensor p = path_->forward(x, masks, record);
            require_same_shape(p.shape(), z.shape(), "FsoBlock merge");
            for (std::size_t i = 0; i < z.size(); ++i) z[i] += p[i];
        } else if (kind_ == ParallelPath::identity) {
            for (std::size_t i = 0; i < z.size(); ++i) z[i] += x[i];
        }
        Tensor y(z.shape());
        for (std::size_t i = 0; i < z.size(); ++i) y[i] = diffcore::activate(act_, z[i]);
        if (record) pre_ = std::move(z);
        return y;
    }

    Tensor backward(const Tensor& g) override {
        if (!pre_) throw UsageError("fso_block: backward called without a recorded forward pass");
        require_same_shape(g.shape(), pre_->shape(), "fso_block backward");
        Tensor gz(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) gz[i] = g[i] * diffcore::activate_derivative(act_, (*pre_)[i]);
        pre_.reset();
        Tensor gx = spectral_->backward(gz);
        if (kind_ == ParallelPath::layer) {
            const Tensor gp = path_->backward(gz);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gp[i];
        } else if (kind_ == ParallelPath::identity) {
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gz[i];
        }
        return gx;
    }

    std::vector<ScoredParameter*> parameters() override {
        std::vector<ScoredParameter*> out;
        if (path_)
            for (auto* p : path_->parameters()) out.push_back(p);
        for (auto* p : spectral_->parameters()) out.push_back(p);
        return out;
    }

private:
    std::unique_ptr<SpectralConv> spectral_;
    LayerPtr path_;
    ParallelPath kind_;
    Activation act_;
    std::optional<Tensor> pre_;
};

/// Spectral operator merged with a dense layer on (B, n) features.
inline std::unique_ptr<FsoBlock> make_dense_fso_block(const std::string& name, std::size_t width, Activation act,
                                                      std::optional<std::size_t> modes = std::nullopt) {
    std::optional<std::vector<std::size_t>> m;
    if (modes) m = std::vector<std::size_t>{*modes};
    auto spectral = std::make_unique<SpectralConv>(name + ".fso", 1, 1, std::vector<std::size_t>{width}, m);
    auto dense = std::make_unique<diffcore::Dense>(name + ".dense", width, width);
    return std::make_unique<FsoBlock>(std::move(spectral), std::move(dense), act);
}

}  // namespace sncl::fso

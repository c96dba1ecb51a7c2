#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sncl/diffcore/layer.hpp"

namespace sncl::diffcore {

/// y = x W^T + b with x of shape (B, in).
class Dense final : public Layer {
public:
    Dense(std::string name, std::size_t in, std::size_t out, bool maskable = true)
        : in_(in),
          out_(out),
          weight_(name + ".weight", {out, in}, in, maskable),
          bias_(name + ".bias", {out}, in, maskable) {}

    std::string kind() const override { return "dense"; }
    std::size_t in_features() const noexcept { return in_; }
    std::size_t out_features() const noexcept { return out_; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 2 || in[1] != in_)
            throw StructuralError("dense expects (B, " + std::to_string(in_) + "), got " + to_string(in));
        return {in[0], out_};
    }

    Tensor forward(const Tensor& x, const MaskSet& masks, bool record) override {
        const Shape out_shape = output_shape(x.shape());
        const std::size_t batch = x.dim(0);
        auto mw = masks.find(weight_);
        auto mb = masks.find(bias_);
        auto w = effective_weights(weight_, mw);
        auto b = effective_weights(bias_, mb);
        Tensor y(out_shape);
        for (std::size_t n = 0; n < batch; ++n) {
            const double* xr = x.data() + n * in_;
            double* yr = y.data() + n * out_;
            for (std::size_t o = 0; o < out_; ++o) {
                const double* wr = w.data() + o * in_;
                double acc = b[o];
                for (std::size_t i = 0; i < in_; ++i) acc += wr[i] * xr[i];
                yr[o] = acc;
            }
        }
        if (record) rec_ = Record{x, {std::move(mw), std::move(mb)}, {std::move(w)}};
        return y;
    }

    Tensor backward(const Tensor& g) override {
        Record& r = require_record(rec_, kind());
        const std::size_t batch = r.input.dim(0);
        require_same_shape(g.shape(), {batch, out_}, "dense backward");
        const auto& w = r.weights[0];
        std::vector<double> gw(w.size(), 0.0), gb(out_, 0.0);
        Tensor gx(r.input.shape());
        for (std::size_t n = 0; n < batch; ++n) {
            const double* xr = r.input.data() + n * in_;
            const double* gr = g.data() + n * out_;
            double* gxr = gx.data() + n * in_;
            for (std::size_t o = 0; o < out_; ++o) {
                const double go = gr[o];
                if (go == 0.0) continue;
                gb[o] += go;
                double* gwr = gw.data() + o * in_;
                const double* wr = w.data() + o * in_;
                for (std::size_t i = 0; i < in_; ++i) {
                    gwr[i] += go * xr[i];
                    gxr[i] += go * wr[i];
                }
            }
        }
        accumulate_masked_grad(weight_, r.masks[0], gw);
        accumulate_masked_grad(bias_, r.masks[1], gb);
        rec_.reset();
        return gx;
    }

    std::vector<ScoredParameter*> parameters() override { return {&weight_, &bias_}; }
    ScoredParameter& weight() noexcept { return weight_; }
    ScoredParameter& bias() noexcept { return bias_; }

private:
    std::size_t in_, out_;
    ScoredParameter weight_, bias_;
    std::optional<Record> rec_;
};

/// 2-D convolution over (B, C, H, W), zero padding, square kernel.
class Conv2d final : public Layer {
public:
    Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride = 1,
           std::optional<std::size_t> padding = std::nullopt, bool maskable = true)
        : cin_(in_ch),
          cout_(out_ch),
          k_(kernel),
          stride_(stride),
          pad_(padding.value_or(kernel / 2)),
          weight_(name + ".weight", {out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, maskable),
          bias_(name + ".bias", {out_ch}, in_ch * kernel * kernel, maskable) {
        if (kernel == 0 || stride == 0) throw ParameterError("conv2d kernel and stride must be positive");
    }

    std::string kind() const override { return "conv2d"; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 4 || in[1] != cin_)
            throw StructuralError("conv2d expects (B, " + std::to_string(cin_) + ", H, W), got " + to_string(in));
        if (in[2] + 2 * pad_ < k_ || in[3] + 2 * pad_ < k_)
            throw StructuralError("conv2d input smaller than kernel: " + to_string(in));
        return {in[0], cout_, (in[2] + 2 * pad_ - k_) / stride_ + 1, (in[3] + 2 * pad_ - k_) / stride_ + 1};
    }

    Tensor forward(const Tensor& x, const MaskSet& masks, bool record) override {
        const Shape os = output_shape(x.shape());
        auto mw = masks.find(weight_);
        auto mb = masks.find(bias_);
        auto w = effective_weights(weight_, mw);
        auto b = effective_weights(bias_, mb);
        Tensor y(os);
        const std::size_t H = x.dim(2), W = x.dim(3), OH = os[2], OW = os[3];
        for (std::size_t n = 0; n < os[0]; ++n) {
            for (std::size_t co = 0; co < cout_; ++co) {
                double* yc = y.data() + (n * cout_ + co) * OH * OW;
                std::fill(yc, yc + OH * OW, b[co]);
                for (std::size_t ci = 0; ci < cin_; ++ci) {
                    const double* xc = x.data() + (n * cin_ + ci) * H * W;
                    for (std::size_t ky = 0; ky < k_; ++ky)
                        for (std::size_t kx = 0; kx < k_; ++kx) {
                            const double wv = w[((co * cin_ + ci) * k_ + ky) * k_ + kx];
                            if (wv == 0.0) continue;
                            for_each_tap(H, W, OH, OW, ky, kx, [&](std::size_t oy, std::size_t ox0, std::size_t ox1,
                                                                   std::size_t iy, std::size_t ix0) {
                                double* yr = yc + oy * OW;
                                const double* xr = xc + iy * W;
                                if (stride_ == 1) {
                                    const double* xs = xr + ix0;
                                    double* ys = yr + ox0;
                                    for (std::size_t t = 0; t < ox1 - ox0; ++t) ys[t] += wv * xs[t];
                                } else {
                                    for (std::size_t ox = ox0; ox < ox1; ++ox)
                                        yr[ox] += wv * xr[ix0 + (ox - ox0) * stride_];
                                }
                            });
                        }
                }
            }
        }
        if (record) rec_ = Record{x, {std::move(mw), std::move(mb)}, {std::move(w)}};
        return y;
    }

    Tensor backward(const Tensor& g) override {
        Record& r = require_record(rec_, kind());
        const Tensor& x = r.input;
        const Shape os = output_shape(x.shape());
        require_same_shape(g.shape(), os, "conv2d backward");
        const auto& w = r.weights[0];
        const std::size_t H = x.dim(2), W = x.dim(3), OH = os[2], OW = os[3];
        std::vector<double> gw(w.size(), 0.0), gb(cout_, 0.0);
        Tensor gx(x.shape());
        for (std::size_t n = 0; n < os[0]; ++n) {
            for (std::size_t co = 0; co < cout_; ++co) {
                const double* gc = g.data() + (n * cout_ + co) * OH * OW;
                for (std::size_t i = 0; i < OH * OW; ++i) gb[co] += gc[i];
                for (std::size_t ci = 0; ci < cin_; ++ci) {
                    const double* xc = x.data() + (n * cin_ + ci) * H * W;
                    double* gxc = gx.data() + (n * cin_ + ci) * H * W;
                    for (std::size_t ky = 0; ky < k_; ++ky)
                        for (std::size_t kx = 0; kx < k_; ++kx) {
                            const std::size_t wi = ((co * cin_ + ci) * k_ + ky) * k_ + kx;
                            const double wv = w[wi];
                            double acc = 0.0;
                            for_each_tap(H, W, OH, OW, ky, kx, [&](std::size_t oy, std::size_t ox0, std::size_t ox1,
                                                                   std::size_t iy, std::size_t ix0) {
                                const double* gr = gc + oy * OW;
                                const double* xr = xc + iy * W;
                                double* gxr = gxc + iy * W;
                                if (stride_ == 1) {
                                    const double* xs = xr + ix0;
                                    const double* gs = gr + ox0;
                                    double* gxs = gxr + ix0;
                                    for (std::size_t t = 0; t < ox1 - ox0; ++t) {
                                        acc += gs[t] * xs[t];
                                        gxs[t] += wv * gs[t];
                                    }
                                } else {
                                    for (std::size_t ox = ox0; ox < ox1; ++ox) {
                                        const std::size_t ix = ix0 + (ox - ox0) * stride_;
                                        acc += gr[ox] * xr[ix];
                                        gxr[ix] += wv * gr[ox];
                                    }
                                }
                            });
                            gw[wi] += acc;
                        }
                }
            }
        }
        accumulate_masked_grad(weight_, r.masks[0], gw);
        accumulate_masked_grad(bias_, r.masks[1], gb);
        rec_.reset();
        return gx;
    }

    std::vector<ScoredParameter*> parameters() override { return {&weight_, &bias_}; }
    ScoredParameter& weight() noexcept { return weight_; }
    ScoredParameter& bias() noexcept { return bias_; }

private:
    /// Calls fn(oy, ox_begin, ox_end, iy, ix_at_ox_begin) for every output row
    /// that kernel tap (ky, kx) touches inside the unpadded input.
    template <typename Fn>
    void for_each_tap(std::size_t H, std::size_t W, std::size_t OH, std::size_t OW, std::size_t ky, std::size_t kx,
                      Fn&& fn) const {
        // ix = ox*stride + kx - pad must lie in [0, W)
        std::size_t ox0 = 0;
        while (ox0 < OW && ox0 * stride_ + kx < pad_) ++ox0;
        std::size_t ox1 = ox0;
        while (ox1 < OW && ox1 * stride_ + kx - pad_ < W) ++ox1;
        if (ox0 >= ox1) return;
        for (std::size_t oy = 0; oy < OH; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            fn(oy, ox0, ox1, static_cast<std::size_t>(iy), ox0 * stride_ + kx - pad_);
        }
    }

    std::size_t cin_, cout_, k_, stride_, pad_;
    ScoredParameter weight_, bias_;
    std::optional<Record> rec_;
};

/// (B, C*r*r, H, W) -> (B, C, r*H, r*W); channel c*r*r + i*r + j lands at sub-pixel (i, j).
class PixelShuffle final : public Layer {
public:
    explicit PixelShuffle(std::size_t factor) : r_(factor) {
        if (factor == 0) throw ParameterError("pixel shuffle factor must be positive");
    }

    std::string kind() const override { return "pixel-rearrange-upscale"; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 4 || in[1] % (r_ * r_) != 0)
            throw StructuralError("pixel shuffle by " + std::to_string(r_) + " needs channels divisible by " +
                                  std::to_string(r_ * r_) + ", got " + to_string(in));
        return {in[0], in[1] / (r_ * r_), in[2] * r_, in[3] * r_};
    }

    Tensor forward(const Tensor& x, const MaskSet&, bool record) override {
        Tensor y(output_shape(x.shape()));
        visit(x.shape(), [&](std::size_t xi, std::size_t yi) { y[yi] = x[xi]; });
        if (record) recorded_shape_ = x.shape();
        return y;
    }

    Tensor backward(const Tensor& g) override {
        if (!recorded_shape_) throw UsageError("pixel shuffle: backward called without a recorded forward pass");
        Tensor gx(*recorded_shape_);
        require_same_shape(g.shape(), output_shape(gx.shape()), "pixel shuffle backward");
        visit(gx.shape(), [&](std::size_t xi, std::size_t yi) { gx[xi] = g[yi]; });
        recorded_shape_.reset();
        return gx;
    }

private:
    /// Calls fn(input_index, output_index) for every element.
    template <typename Fn>
    void visit(const Shape& in, Fn&& fn) const {
        const std::size_t B = in[0], C = in[1] / (r_ * r_), H = in[2], W = in[3];
        const std::size_t OH = H * r_, OW = W * r_;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < r_; ++i)
                    for (std::size_t j = 0; j < r_; ++j) {
                        const std::size_t ic = c * r_ * r_ + i * r_ + j;
                        for (std::size_t h = 0; h < H; ++h)
                            for (std::size_t w = 0; w < W; ++w)
                                fn(((n * C * r_ * r_ + ic) * H + h) * W + w,
                                   ((n * C + c) * OH + h * r_ + i) * OW + w * r_ + j);
                    }
    }

    std::size_t r_;
    std::optional<Shape> recorded_shape_;
};

using sncl::to_string;

enum class Activation { identity, relu, gelu, sigmoid };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::gelu: return "gelu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

inline double activate(Activation a, double x) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::gelu: return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return x;
}

inline double activate_derivative(Activation a, double x) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::gelu: {
            const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + x * pdf;
        }
        case Activation::sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

class ActivationLayer final : public Layer {
public:
    explicit ActivationLayer(Activation a) : act_(a) {}

    std::string kind() const override { return "activation"; }
    Activation activation() const noexcept { return act_; }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor forward(const Tensor& x, const MaskSet&, bool record) override {
        Tensor y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = activate(act_, x[i]);
        if (record) input_ = x;
        return y;
    }

    Tensor backward(const Tensor& g) override {
        if (!input_) throw UsageError("activation: backward called without a recorded forward pass");
        require_same_shape(g.shape(), input_->shape(), "activation backward");
        Tensor gx(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * activate_derivative(act_, (*input_)[i]);
        input_.reset();
        return gx;
    }

private:
    Activation act_;
    std::optional<Tensor> input_;
};

/// Changes the per-sample shape, keeping the batch axis.
class Reshape final : public Layer {
public:
    explicit Reshape(Shape per_sample) : target_(std::move(per_sample)) {}

    std::string kind() const override { return "reshape"; }

    Shape output_shape(const Shape& in) const override {
        if (in.empty() || numel(in) / in[0] != numel(target_))
            throw StructuralError("cannot reshape " + to_string(in) + " to per-sample " + to_string(target_));
        Shape out{in[0]};
        out.insert(out.end(), target_.begin(), target_.end());
        return out;
    }

    Tensor forward(const Tensor& x, const MaskSet&, bool record) override {
        if (record) recorded_shape_ = x.shape();
        return x.reshaped(output_shape(x.shape()));
    }

    Tensor backward(const Tensor& g) override {
        if (!recorded_shape_) throw UsageError("reshape: backward called without a recorded forward pass");
        Tensor gx = g.reshaped(*recorded_shape_);
        recorded_shape_.reset();
        return gx;
    }

private:
    Shape target_;
    std::optional<Shape> recorded_shape_;
};

}  // namespace sncl::diffcore

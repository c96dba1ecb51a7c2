#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "sncl/diffcore/layer.hpp"
#include "sncl/fso/fft.hpp"

namespace sncl::fso {

using diffcore::Layer;
using diffcore::MaskSet;
using diffcore::ScoredParameter;
using cplx = std::complex<double>;

/// Default retained modes for an axis: floor(n/2), at least 1.
inline std::size_t default_modes(std::size_t axis) { return std::max<std::size_t>(1, axis / 2); }

/// Every mode of the real-input half spectrum: floor(n/2)+1.
inline std::size_t full_modes(std::size_t axis) { return axis / 2 + 1; }

/// Which half-spectrum bins a spectral layer multiplies.
///
/// On the last (real-transform) axis bins 0..modes-1 are kept; on a leading
/// axis the bins whose signed frequency satisfies |k| < modes are kept.
struct SpectralLayout {
    std::vector<std::size_t> spatial;
    std::vector<std::size_t> modes;
    std::size_t rows = 1;       // leading-axis length (1 for 1-D)
    std::size_t half_cols = 0;  // last-axis half-spectrum length
    std::vector<std::size_t> kept_rows;
    std::size_t kept_cols = 0;
    std::vector<std::size_t> kept_index;  // flat half-spectrum index per kept bin
    std::vector<double> multiplicity;     // 1 for self-conjugate columns, 2 otherwise

    SpectralLayout() = default;

    SpectralLayout(std::vector<std::size_t> spatial_, std::vector<std::size_t> modes_)
        : spatial(std::move(spatial_)), modes(std::move(modes_)) {
        if (spatial.empty() || spatial.size() > 2) throw StructuralError("spectral layers support 1-D and 2-D inputs");
        if (modes.size() == 1 && spatial.size() == 2) modes.push_back(modes[0]);
        if (modes.size() != spatial.size()) throw ParameterError("one mode count per spatial axis is required");
        for (std::size_t a = 0; a < spatial.size(); ++a) {
            if (spatial[a] < 1) throw StructuralError("spatial axis of length 0");
            if (modes[a] < 1 || modes[a] > full_modes(spatial[a]))
                throw ParameterError("modes " + std::to_string(modes[a]) + " exceed the Nyquist limit " +
                                     std::to_string(full_modes(spatial[a])) + " of an axis of length " +
                                     std::to_string(spatial[a]));
        }
        const std::size_t W = spatial.back();
        half_cols = W / 2 + 1;
        kept_cols = modes.back();
        if (spatial.size() == 2) {
            rows = spatial[0];
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t mag = r <= rows / 2 ? r : rows - r;
                if (mag < modes[0]) kept_rows.push_back(r);
            }
        } else {
            kept_rows = {0};
        }
        for (auto r : kept_rows)
            for (std::size_t c = 0; c < kept_cols; ++c) {
                kept_index.push_back(r * half_cols + c);
                const bool self_conjugate = c == 0 || (W % 2 == 0 && c == W / 2);
                multiplicity.push_back(self_conjugate ? 1.0 : 2.0);
            }
    }

    std::size_t kept() const noexcept { return kept_index.size(); }
    std::size_t points() const noexcept { return rows * spatial.back(); }

    /// Weight tensor shape for (cin, cout).
    Shape weight_shape(std::size_t cin, std::size_t cout) const {
        if (spatial.size() == 2) return {cin, cout, kept_rows.size(), kept_cols};
        return {cin, cout, kept_cols};
    }

    /// Makes the self-conjugate columns of `n` half spectra Hermitian, so the
    /// inverse real transform equals the real part of the full inverse.
    void symmetrize(cplx* spec, std::size_t n) const {
        const std::size_t W = spatial.back();
        std::vector<std::size_t> cols{0};
        if (W % 2 == 0 && W / 2 != 0) cols.push_back(W / 2);
        const std::size_t len = rows * half_cols;
        for (std::size_t s = 0; s < n; ++s) {
            cplx* z = spec + s * len;
            for (auto c : cols)
                for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t m = (rows - r) % rows;
                    if (m < r) continue;
                    cplx& a = z[r * half_cols + c];
                    cplx& b = z[m * half_cols + c];
                    if (m == r) {
                        a = cplx(a.real(), 0.0);
                    } else {
                        const cplx sym = 0.5 * (a + std::conj(b));
                        a = sym;
                        b = std::conj(sym);
                    }
                }
        }
    }
};

/// Complex spectral weights R = (theta_real ⊙ m_real) + i (theta_imag ⊙ m_imag)
/// over the kept modes, with independent scores and masks per part.
///
/// Input is (B, Cin, *spatial); with one channel in and out the channel axis
/// may be omitted, i.e. (B, *spatial).
class SpectralConv final : public Layer {
public:
    SpectralConv(std::string name, std::size_t cin, std::size_t cout, std::vector<std::size_t> spatial,
                 std::optional<std::vector<std::size_t>> modes = std::nullopt, bool maskable = true)
        : name_(std::move(name)), cin_(cin), cout_(cout), layout_(spatial, modes ? *modes : defaults(spatial)),
          real_(name_ + ".real", layout_.weight_shape(cin, cout), cin, maskable),
          imag_(name_ + ".imag", layout_.weight_shape(cin, cout), cin, maskable) {}

    std::string kind() const override { return "spectral"; }

    const SpectralLayout& layout() const noexcept { return layout_; }
    std::size_t in_channels() const noexcept { return cin_; }
    std::size_t out_channels() const noexcept { return cout_; }
    ScoredParameter& real() noexcept { return real_; }
    ScoredParameter& imag() noexcept { return imag_; }

    Shape output_shape(const Shape& in) const override {
        Shape out = in;
        if (!channel_less(in)) out[1] = cout_;
        return out;
    }

    Tensor forward(const Tensor& x, const MaskSet& masks, bool record) override {
        channel_less(x.shape());
        const std::size_t B = x.dim(0);
        const std::size_t N = layout_.points(), K = layout_.kept();
        auto mr = masks.find(real_), mi = masks.find(imag_);
        auto wr = diffcore::effective_weights(real_, mr);
        auto wi = diffcore::effective_weights(imag_, mi);

        RealFft& fin = cached_fft(layout_.spatial, B * cin_);
        std::copy_n(x.data(), B * cin_ * N, fin.real());
        fin.forward();
        std::vector<cplx> X(B * cin_ * K);
        const std::size_t S = fin.spectrum_length();
        for (std::size_t s = 0; s < B * cin_; ++s)
            for (std::size_t k = 0; k < K; ++k) X[s * K + k] = fin.spectrum()[s * S + layout_.kept_index[k]];

        RealFft& fout = cached_fft(layout_.spatial, B * cout_);
        std::fill_n(fout.spectrum(), fout.spectrum_length() * B * cout_, cplx{});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < cout_; ++o) {
                cplx* Y = fout.spectrum() + (b * cout_ + o) * S;
                for (std::size_t i = 0; i < cin_; ++i) {
                    const cplx* Xi = X.data() + (b * cin_ + i) * K;
                    const std::size_t w0 = (i * cout_ + o) * K;
                    for (std::size_t k = 0; k < K; ++k)
                        Y[layout_.kept_index[k]] += cplx(wr[w0 + k], wi[w0 + k]) * Xi[k];
                }
            }
        layout_.symmetrize(fout.spectrum(), B * cout_);
        fout.inverse();
        Tensor y(output_shape(x.shape()));
        const double inv_n = 1.0 / static_cast<double>(N);
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = fout.real()[j] * inv_n;

        if (record) {
            rec_ = diffcore::Record{x, {std::move(mr), std::move(mi)}, {std::move(wr), std::move(wi)}};
            spectrum_ = std::move(X);
        }
        return y;
    }

    Tensor backward(const Tensor& g) override {
        auto& rec = diffcore::require_record(rec_, "spectral");
        const std::size_t B = rec.input.dim(0);
        const std::size_t N = layout_.points(), K = layout_.kept();
        const auto& wr = rec.weights[0];
        const auto& wi = rec.weights[1];
        if (g.size() != B * cout_ * N) throw StructuralError("spectral backward: gradient shape mismatch");

        RealFft& fg = cached_fft(layout_.spatial, B * cout_);
        std::copy_n(g.data(), g.size(), fg.real());
        fg.forward();
        const std::size_t S = fg.spectrum_length();
        const double inv_n = 1.0 / static_cast<double>(N);
        std::vector<cplx> G(B * cout_ * K);
        for (std::size_t s = 0; s < B * cout_; ++s)
            for (std::size_t k = 0; k < K; ++k) G[s * K + k] = fg.spectrum()[s * S + layout_.kept_index[k]] * inv_n;

        std::vector<double> dwr(real_.size(), 0.0), dwi(imag_.size(), 0.0);
        RealFft& fx = cached_fft(layout_.spatial, B * cin_);
        std::fill_n(fx.spectrum(), fx.spectrum_length() * B * cin_, cplx{});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < cin_; ++i) {
                const cplx* Xi = spectrum_.data() + (b * cin_ + i) * K;
                cplx* Z = fx.spectrum() + (b * cin_ + i) * S;
                for (std::size_t o = 0; o < cout_; ++o) {
                    const cplx* Go = G.data() + (b * cout_ + o) * K;
                    const std::size_t w0 = (i * cout_ + o) * K;
                    for (std::size_t k = 0; k < K; ++k) {
                        const cplx dw = layout_.multiplicity[k] * Go[k] * std::conj(Xi[k]);
                        dwr[w0 + k] += dw.real();
                        dwi[w0 + k] += dw.imag();
                        Z[layout_.kept_index[k]] += std::conj(cplx(wr[w0 + k], wi[w0 + k])) * Go[k];
                    }
                }
            }
        layout_.symmetrize(fx.spectrum(), B * cin_);
        fx.inverse();
        Tensor dx(rec.input.shape());
        std::copy_n(fx.real(), dx.size(), dx.data());

        diffcore::accumulate_masked_grad(real_, rec.masks[0], dwr);
        diffcore::accumulate_masked_grad(imag_, rec.masks[1], dwi);
        rec_.reset();
        spectrum_.clear();
        return dx;
    }

    std::vector<ScoredParameter*> parameters() override { return {&real_, &imag_}; }

private:
    static std::vector<std::size_t> defaults(const std::vector<std::size_t>& spatial) {
        std::vector<std::size_t> m;
        for (auto a : spatial) m.push_back(default_modes(a));
        return m;
    }

    bool channel_less(const Shape& in) const {
        const std::size_t sr = layout_.spatial.size();
        if (in.size() == sr + 2 && in[1] == cin_ && std::equal(layout_.spatial.begin(), layout_.spatial.end(), in.begin() + 2))
            return false;
        if (cin_ == 1 && cout_ == 1 && in.size() == sr + 1 &&
            std::equal(layout_.spatial.begin(), layout_.spatial.end(), in.begin() + 1))
            return true;
        throw StructuralError("spectral layer '" + name_ + "' expects (B, " + std::to_string(cin_) + ", " +
                              to_string(layout_.spatial) + "), got " + to_string(in));
    }

    std::string name_;
    std::size_t cin_, cout_;
    SpectralLayout layout_;
    ScoredParameter real_, imag_;
    std::optional<diffcore::Record> rec_;
    std::vector<cplx> spectrum_;
};

/// Applies the spectral operator without recording state for backward.
inline Tensor fso_apply(const Tensor& x, SpectralConv& w, const MaskSet& masks) { return w.forward(x, masks, false); }

}  // namespace sncl::fso

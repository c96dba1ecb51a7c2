#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sncl/diffcore/loss.hpp"
#include "sncl/tensor.hpp"

namespace sncl::nir {

inline constexpr std::size_t ssim_window = 11;
inline constexpr double ssim_sigma = 1.5;
inline constexpr double ssim_k1 = 0.01;
inline constexpr double ssim_k2 = 0.03;
inline constexpr double psnr_cap = 100.0;

namespace detail {

inline std::vector<double> gaussian_window(std::size_t n, double sigma) {
    std::vector<double> g(n);
    const double c = static_cast<double>(n - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - c;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
}

/// Separable weights along rows (gr) and columns (gc); valid-mode filtering.
struct Window {
    std::vector<double> gr, gc;

    static Window for_frame(std::size_t H, std::size_t W) {
        if (H < ssim_window || W < ssim_window)
            return {std::vector<double>(H, 1.0 / static_cast<double>(H)), std::vector<double>(W, 1.0 / static_cast<double>(W))};
        auto g = gaussian_window(ssim_window, ssim_sigma);
        return {g, g};
    }

    std::size_t out_h(std::size_t H) const { return H - gr.size() + 1; }
    std::size_t out_w(std::size_t W) const { return W - gc.size() + 1; }

    /// out[q] = sum_p w[p - q] in[p]
    std::vector<double> filter(const double* in, std::size_t H, std::size_t W) const {
        const std::size_t OH = out_h(H), OW = out_w(W);
        std::vector<double> tmp(H * OW, 0.0), out(OH * OW, 0.0);
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < OW; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < gc.size(); ++k) acc += gc[k] * in[r * W + c + k];
                tmp[r * OW + c] = acc;
            }
        for (std::size_t r = 0; r < OH; ++r)
            for (std::size_t k = 0; k < gr.size(); ++k) {
                const double w = gr[k];
                for (std::size_t c = 0; c < OW; ++c) out[r * OW + c] += w * tmp[(r + k) * OW + c];
            }
        return out;
    }

    /// Adjoint of filter: in[p] = sum_q w[p - q] out[q]
    std::vector<double> scatter(const std::vector<double>& out, std::size_t H, std::size_t W) const {
        const std::size_t OH = out_h(H), OW = out_w(W);
        std::vector<double> tmp(H * OW, 0.0), in(H * W, 0.0);
        for (std::size_t r = 0; r < OH; ++r)
            for (std::size_t k = 0; k < gr.size(); ++k) {
                const double w = gr[k];
                for (std::size_t c = 0; c < OW; ++c) tmp[(r + k) * OW + c] += w * out[r * OW + c];
            }
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < OW; ++c) {
                const double v = tmp[r * OW + c];
                for (std::size_t k = 0; k < gc.size(); ++k) in[r * W + c + k] += gc[k] * v;
            }
        return in;
    }
};

}  // namespace detail

struct SsimResult {
    double value = 0.0;
    Tensor grad;  // dSSIM/dy, filled when requested
};

/// Mean SSIM over every (frame, channel) plane of (..., H, W) tensors with
/// dynamic range 1, using an 11x11 Gaussian window (sigma 1.5) in valid mode.
/// Planes smaller than the window use one global window.
inline SsimResult ssim(const Tensor& x, const Tensor& y, bool want_grad = false) {
    require_same_shape(x.shape(), y.shape(), "ssim");
    if (x.rank() < 2) throw StructuralError("ssim expects at least (H, W)");
    const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    const std::size_t planes = x.size() / (H * W);
    const auto win = detail::Window::for_frame(H, W);
    const double C1 = (ssim_k1 * 1.0) * (ssim_k1 * 1.0);
    const double C2 = (ssim_k2 * 1.0) * (ssim_k2 * 1.0);
    const std::size_t OH = win.out_h(H), OW = win.out_w(W), M = OH * OW;

    SsimResult res;
    if (want_grad) res.grad = Tensor(x.shape());
    std::vector<double> xx(H * W), yy(H * W), xy(H * W);
    double total = 0.0;
    for (std::size_t p = 0; p < planes; ++p) {
        const double* xp = x.data() + p * H * W;
        const double* yp = y.data() + p * H * W;
        for (std::size_t i = 0; i < H * W; ++i) {
            xx[i] = xp[i] * xp[i];
            yy[i] = yp[i] * yp[i];
            xy[i] = xp[i] * yp[i];
        }
        const auto mx = win.filter(xp, H, W), my = win.filter(yp, H, W);
        const auto exx = win.filter(xx.data(), H, W), eyy = win.filter(yy.data(), H, W), exy = win.filter(xy.data(), H, W);
        std::vector<double> d_my(M), d_eyy(M), d_exy(M);
        double plane = 0.0;
        for (std::size_t q = 0; q < M; ++q) {
            const double vx = exx[q] - mx[q] * mx[q], vy = eyy[q] - my[q] * my[q], cxy = exy[q] - mx[q] * my[q];
            const double A1 = 2.0 * mx[q] * my[q] + C1, A2 = 2.0 * cxy + C2;
            const double B1 = mx[q] * mx[q] + my[q] * my[q] + C1, B2 = vx + vy + C2;
            const double s = (A1 * A2) / (B1 * B2);
            plane += s;
            if (want_grad) {
                const double scale = 1.0 / static_cast<double>(M * planes);
                d_my[q] = scale * s *
                          (2.0 * mx[q] / A1 - 2.0 * mx[q] / A2 - 2.0 * my[q] / B1 + 2.0 * my[q] / B2);
                d_eyy[q] = -scale * s / B2;
                d_exy[q] = scale * 2.0 * s / A2;
            }
        }
        total += plane / static_cast<double>(M);
        if (want_grad) {
            const auto g_my = win.scatter(d_my, H, W), g_eyy = win.scatter(d_eyy, H, W), g_exy = win.scatter(d_exy, H, W);
            double* g = res.grad.data() + p * H * W;
            for (std::size_t i = 0; i < H * W; ++i) g[i] = g_my[i] + 2.0 * yp[i] * g_eyy[i] + xp[i] * g_exy[i];
        }
    }
    res.value = total / static_cast<double>(planes);
    return res;
}

/// 10 log10(max^2 / MSE), capped at 100 dB (identical inputs hit the cap).
inline double psnr(const Tensor& v, const Tensor& v_hat, double max_value = 1.0) {
    require_same_shape(v.shape(), v_hat.shape(), "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) mse += (v[i] - v_hat[i]) * (v[i] - v_hat[i]);
    mse /= static_cast<double>(v.size());
    if (mse == 0.0) return psnr_cap;
    return std::min(psnr_cap, 10.0 * std::log10(max_value * max_value / mse));
}

/// alpha * mean|v - v_hat| + (1 - alpha) * (1 - SSIM(v, v_hat)); gradient w.r.t. v_hat.
inline diffcore::LossValue vil_loss(const Tensor& v, const Tensor& v_hat, double alpha = 0.7) {
    require_same_shape(v.shape(), v_hat.shape(), "vil_loss");
    const auto s = ssim(v, v_hat, true);
    diffcore::LossValue out{0.0, Tensor(v.shape())};
    const double n = static_cast<double>(v.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v_hat[i] - v[i];
        l1 += std::abs(d);
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        out.grad[i] = alpha * sign / n - (1.0 - alpha) * s.grad[i];
    }
    out.value = alpha * l1 / n + (1.0 - alpha) * (1.0 - s.value);
    return out;
}

}  // namespace sncl::nir

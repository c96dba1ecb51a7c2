#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "sncl/errors.hpp"

namespace sncl::fso {

namespace detail {
/// FFTW's planner is not re-entrant.
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

/// Batched real-to-complex transform over the trailing `dims` of `howmany`
/// contiguous signals, with owned aligned buffers. The half spectrum keeps
/// the last axis at floor(n/2)+1 entries.
class RealFft {
public:
    RealFft(std::vector<std::size_t> dims, std::size_t howmany) : dims_(std::move(dims)), howmany_(howmany) {
        if (dims_.empty() || dims_.size() > 2) throw StructuralError("RealFft supports 1-D and 2-D signals");
        real_len_ = 1;
        for (auto d : dims_) real_len_ *= d;
        spec_len_ = real_len_ / dims_.back() * (dims_.back() / 2 + 1);
        real_ = static_cast<double*>(fftw_malloc(sizeof(double) * real_len_ * howmany_));
        spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * spec_len_ * howmany_));
        if (!real_ || !spec_) throw std::bad_alloc();
        std::vector<int> n(dims_.begin(), dims_.end());
        const int rank = static_cast<int>(n.size());
        const int count = static_cast<int>(howmany_);
        std::lock_guard lock(detail::planner_mutex());
        forward_ = fftw_plan_many_dft_r2c(rank, n.data(), count, real_, nullptr, 1, static_cast<int>(real_len_), spec_,
                                          nullptr, 1, static_cast<int>(spec_len_), FFTW_ESTIMATE);
        inverse_ = fftw_plan_many_dft_c2r(rank, n.data(), count, spec_, nullptr, 1, static_cast<int>(spec_len_), real_,
                                          nullptr, 1, static_cast<int>(real_len_), FFTW_ESTIMATE);
        if (!forward_ || !inverse_) throw NumericError("FFTW could not create a plan");
    }

    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    ~RealFft() {
        std::lock_guard lock(detail::planner_mutex());
        if (forward_) fftw_destroy_plan(forward_);
        if (inverse_) fftw_destroy_plan(inverse_);
        fftw_free(real_);
        fftw_free(spec_);
    }

    std::size_t real_length() const noexcept { return real_len_; }
    std::size_t spectrum_length() const noexcept { return spec_len_; }
    std::size_t howmany() const noexcept { return howmany_; }
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }

    double* real() noexcept { return real_; }
    std::complex<double>* spectrum() noexcept { return reinterpret_cast<std::complex<double>*>(spec_); }

    /// real -> spectrum, unnormalized.
    void forward() { fftw_execute(forward_); }
    /// spectrum -> real, unnormalized; the spectrum buffer is overwritten.
    void inverse() { fftw_execute(inverse_); }

private:
    std::vector<std::size_t> dims_;
    std::size_t howmany_;
    std::size_t real_len_ = 0, spec_len_ = 0;
    double* real_ = nullptr;
    fftw_complex* spec_ = nullptr;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

/// Per-thread plan cache keyed by (dims, howmany).
inline RealFft& cached_fft(const std::vector<std::size_t>& dims, std::size_t howmany) {
    thread_local std::map<std::pair<std::vector<std::size_t>, std::size_t>, std::unique_ptr<RealFft>> cache;
    auto key = std::make_pair(dims, howmany);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, std::make_unique<RealFft>(dims, howmany)).first;
    return *it->second;
}

}  // namespace sncl::fso

#include "common/fft.hpp"

#include <algorithm>
#include <new>
#include <vector>

namespace wsi::detail {

RealBuffer alloc_real(std::size_t n) {
    auto* p = static_cast<float*>(fftwf_malloc(sizeof(float) * n));
    if (!p)
        throw std::bad_alloc();
    return RealBuffer(p);
}

ComplexBuffer alloc_complex(std::size_t n) {
    auto* p = static_cast<fftwf_complex*>(fftwf_malloc(sizeof(fftwf_complex) * n));
    if (!p)
        throw std::bad_alloc();
    return ComplexBuffer(p);
}

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

int good_fft_size(int n) {
    for (int m = std::max(n, 1);; ++m) {
        int r = m;
        for (int p : {2, 3, 5, 7})
            while (r % p == 0)
                r /= p;
        if (r == 1)
            return m;
    }
}

RealFft2D::RealFft2D(int w, int h)
    : w_(w), h_(h), real_(alloc_real(static_cast<std::size_t>(w) * h)),
      spec_(alloc_complex(static_cast<std::size_t>(h) * (w / 2 + 1))) {
    std::lock_guard lock(planner_mutex());
    fwd_ = fftwf_plan_dft_r2c_2d(h, w, real_.get(), spec_.get(), FFTW_ESTIMATE);
    inv_ = fftwf_plan_dft_c2r_2d(h, w, spec_.get(), real_.get(), FFTW_ESTIMATE);
}

RealFft2D::~RealFft2D() {
    std::lock_guard lock(planner_mutex());
    fftwf_destroy_plan(fwd_);
    fftwf_destroy_plan(inv_);
}

void RealFft2D::forward() { fftwf_execute(fwd_); }

void RealFft2D::inverse() { fftwf_execute(inv_); }

void convolve_circular(std::span<float* const> planes, int w, int h, std::span<const float> kernel,
                       int half) {
    RealFft2D fft(w, h);
    const int side = 2 * half + 1;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::fill(fft.real(), fft.real() + n, 0.0f);
    for (int ky = -half; ky <= half; ++ky)
        for (int kx = -half; kx <= half; ++kx) {
            const int x = (kx + w) % w;
            const int y = (ky + h) % h;
            fft.real()[static_cast<std::size_t>(y) * w + x] += kernel[(ky + half) * side + (kx + half)];
        }
    fft.forward();
    std::vector<std::complex<float>> kspec(fft.spectrum_size());
    const auto* spec = reinterpret_cast<const std::complex<float>*>(fft.spectrum());
    std::copy(spec, spec + kspec.size(), kspec.begin());

    const float scale = 1.0f / static_cast<float>(n);
    for (float* plane : planes) {
        std::copy(plane, plane + n, fft.real());
        fft.forward();
        auto* s = reinterpret_cast<std::complex<float>*>(fft.spectrum());
        for (std::size_t i = 0; i < kspec.size(); ++i)
            s[i] *= kspec[i] * scale;
        fft.inverse();
        std::copy(fft.real(), fft.real() + n, plane);
    }
}

} // namespace wsi::detail

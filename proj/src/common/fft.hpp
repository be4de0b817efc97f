#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>

namespace wsi::detail {

struct FftwFree {
    void operator()(void* p) const { fftwf_free(p); }
};

using RealBuffer = std::unique_ptr<float[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftwf_complex[], FftwFree>;

RealBuffer alloc_real(std::size_t n);
ComplexBuffer alloc_complex(std::size_t n);

/// FFTW's planner is not thread-safe; every plan create/destroy goes through
/// this lock.
std::mutex& planner_mutex();

/// Smallest n' >= n whose prime factors are all in {2, 3, 5, 7}.
int good_fft_size(int n);

/// Forward/inverse 2-D real transforms of a fixed size (h rows x w cols).
class RealFft2D {
public:
    RealFft2D(int w, int h);
    ~RealFft2D();
    RealFft2D(const RealFft2D&) = delete;
    RealFft2D& operator=(const RealFft2D&) = delete;

    int width() const { return w_; }
    int height() const { return h_; }
    std::size_t spectrum_size() const { return static_cast<std::size_t>(h_) * (w_ / 2 + 1); }

    float* real() { return real_.get(); }
    fftwf_complex* spectrum() { return spec_.get(); }

    void forward(); // real() -> spectrum()
    void inverse(); // spectrum() -> real(), unnormalized

private:
    int w_, h_;
    RealBuffer real_;
    ComplexBuffer spec_;
    fftwf_plan fwd_ = nullptr;
    fftwf_plan inv_ = nullptr;
};

/// Circular convolution of every plane (each w x h, row-major, modified in
/// place) with a centered square kernel of side 2*half+1. Callers keep the
/// region of interest at least `half` pixels away from the plane edges.
void convolve_circular(std::span<float* const> planes, int w, int h, std::span<const float> kernel,
                       int half);

} // namespace wsi::detail

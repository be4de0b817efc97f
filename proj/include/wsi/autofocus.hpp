#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsi/calibration.hpp"
#include "wsi/image.hpp"

namespace wsi {

struct AfConfig {
    int sample_count = 10000;
    int max_iters = 10;
    int min_iters = 5;
    int coarse_range_px = 80;
    int histogram_bins = 64;
    double parzen_sigma_bins = 1.0;
    double step_init_px = 1.0;
    double converge_tol_px = 0.05;
    // Gaussian pre-smoothing along x (px) applied to both channels at the
    // sampled pixels; keeps interpolation from favouring fractional shifts.
    double presmooth_sigma_px = 2.0;
    // Peak MI minus the median over the coarse scan must exceed this.
    double min_prominence_nats = 0.02;
    std::uint64_t rng_seed = 0x5eed;

    void validate() const;
};

struct DefocusEstimate {
    double separation_px = 0.0;
    double defocus_um = 0.0; // filled only when a calibration is supplied
    double mi_final = 0.0;
    int iterations = 0;
    int coarse_peak_px = 0;
    double prominence_nats = 0.0;
};

/// Mutual information between a(x, y) and b(x + shift, y) from a Parzen-
/// smoothed joint histogram over a fixed pixel sample. The sample and bin
/// ranges are fixed at construction, so every shift is scored on the same
/// footing.
class MiEstimator {
public:
    MiEstimator(const Image& a, const Image& b, const AfConfig& cfg, int max_shift_px);
    /// Two channels of one frame, read in place.
    MiEstimator(const Image& frame, int channel_a, int channel_b, const AfConfig& cfg, int max_shift_px);

    double mi(double shift_px) const;
    /// MI and dMI/dshift (analytic).
    double mi_with_gradient(double shift_px, double& gradient) const;
    /// Entropy of a's smoothed marginal, the upper bound of mi().
    double entropy_a() const;

    int max_shift() const { return max_shift_; }

private:
    void init(const float* pa, const float* pb, int w, int h, const AfConfig& cfg);
    double evaluate(double shift_px, double* gradient) const;
    void smooth(std::vector<double>& hist) const;

    int bins_;
    int max_shift_;
    std::vector<double> kernel_;
    std::vector<float> a_bin_;   // continuous bin coordinate of a per sample
    // Smoothed b over [x - max_shift - 1, x + max_shift + 2] for each sample.
    std::vector<float> b_window_;
    int span_ = 0;
    double b_min_ = 0.0;
    double b_scale_ = 0.0;
};

double mutual_information(const Image& a, const Image& b, double shift_px, const AfConfig& cfg);

/// Signed red-to-green separation of a dual-illumination frame: the shift s
/// that best aligns green(x + s) with red(x). Integer scan over the coarse
/// range, then sign-gradient ascent from the best integer.
DefocusEstimate estimate_separation(const Image& frame, const AfConfig& cfg);
DefocusEstimate estimate_separation(const Image& red, const Image& green, const AfConfig& cfg);

double defocus_from_separation(double separation_px, const CalibrationModel& cal);

struct RingCorrection {
    int steps = 0;
    bool clamped = false;
};

/// Ring move that cancels `defocus_um`. With travel limits, the move is
/// clamped so current + steps stays within +/- limit.
RingCorrection ring_correction(double defocus_um, const CalibrationModel& cal, int current_steps = 0,
                               int limit_steps = 0);

std::string estimate_to_json(const DefocusEstimate& est);

} // namespace wsi

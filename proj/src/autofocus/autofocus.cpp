#include "wsi/autofocus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include <json.hpp>

#include "wsi/errors.hpp"

namespace wsi {

void AfConfig::validate() const {
    if (sample_count < 100)
        throw PreconditionError("autofocus needs at least 100 samples");
    if (min_iters < 0 || max_iters < 1 || min_iters > max_iters)
        throw PreconditionError("autofocus iteration bounds must satisfy 0 <= min_iters <= max_iters");
    if (coarse_range_px < 1)
        throw PreconditionError("coarse range must be at least 1 px");
    if (histogram_bins < 4 || histogram_bins > 1024)
        throw PreconditionError("histogram bins must lie in [4, 1024]");
    if (parzen_sigma_bins < 0.0 || step_init_px <= 0.0 || converge_tol_px <= 0.0)
        throw PreconditionError("Parzen sigma, initial step and tolerance must be positive");
}

MiEstimator::MiEstimator(const Image& a, const Image& b, const AfConfig& cfg, int max_shift_px)
    : bins_(cfg.histogram_bins), max_shift_(max_shift_px) {
    if (a.channels() != 1 || b.channels() != 1)
        throw ChannelMismatchError("mutual information needs single-channel images");
    if (a.width() != b.width() || a.height() != b.height())
        throw PreconditionError("mutual information needs equal-size images");
    init(a.plane(0).data(), b.plane(0).data(), a.width(), a.height(), cfg);
}

MiEstimator::MiEstimator(const Image& frame, int channel_a, int channel_b, const AfConfig& cfg, int max_shift_px)
    : bins_(cfg.histogram_bins), max_shift_(max_shift_px) {
    if (channel_a < 0 || channel_b < 0 || channel_a >= frame.channels() || channel_b >= frame.channels())
        throw ChannelMismatchError("frame lacks the requested channels");
    init(frame.plane(channel_a).data(), frame.plane(channel_b).data(), frame.width(), frame.height(), cfg);
}

void MiEstimator::init(const float* pa, const float* pb, int w, int h, const AfConfig& cfg) {
    cfg.validate();
    const int x_lo = max_shift_ + 1;
    const int x_hi = w - max_shift_ - 2;
    if (max_shift_ < 0 || x_hi < x_lo)
        throw PreconditionError("image too narrow for a " + std::to_string(max_shift_) + " px shift range");

    if (cfg.parzen_sigma_bins > 0.0) {
        const double s = cfg.parzen_sigma_bins;
        const int r = static_cast<int>(std::ceil(3.0 * s));
        double sum = 0.0;
        for (int i = -r; i <= r; ++i)
            sum += kernel_.emplace_back(std::exp(-0.5 * i * i / (s * s)));
        for (auto& k : kernel_)
            k /= sum;
    }
    const auto pre = Kernel1D::gaussian(cfg.presmooth_sigma_px, Axis::x);
    const int pr = pre.radius();

    std::mt19937_64 rng(cfg.rng_seed);
    std::uniform_int_distribution<int> ux(x_lo, x_hi);
    std::uniform_int_distribution<int> uy(0, h - 1);
    const int n = cfg.sample_count;
    span_ = 2 * max_shift_ + 4;
    b_window_.resize(static_cast<std::size_t>(n) * span_);
    std::vector<float> a_val(n);
    // Smooths row[x_begin, x_begin + count) into out, clamping at the edges.
    std::vector<float> raw;
    auto smooth_span = [&](const float* row, int x_begin, int count, float* out) {
        raw.resize(static_cast<std::size_t>(count) + 2 * pr);
        for (int i = 0; i < count + 2 * pr; ++i)
            raw[i] = row[std::clamp(x_begin - pr + i, 0, w - 1)];
        for (int i = 0; i < count; ++i) {
            float acc = 0.0f;
            for (int t = 0; t <= 2 * pr; ++t)
                acc += pre.taps[t] * raw[i + t];
            out[i] = acc;
        }
    };
    // Small frames: smoothing both planes once is cheaper than smoothing
    // every sample window. Either way the values are identical.
    // Windows reach one pixel past the right edge, hence the wider b rows.
    std::vector<float> sa, sb;
    const int wb = w + 2;
    const std::size_t pixels = static_cast<std::size_t>(w) * h;
    if (pixels < static_cast<std::size_t>(n) * span_) {
        sa.resize(pixels);
        sb.resize(static_cast<std::size_t>(wb) * h);
        for (int y = 0; y < h; ++y) {
            const std::size_t row = static_cast<std::size_t>(y) * w;
            smooth_span(pa + row, 0, w, sa.data() + row);
            smooth_span(pb + row, 0, wb, sb.data() + static_cast<std::size_t>(y) * wb);
        }
    }
    for (int k = 0; k < n; ++k) {
        const int x = ux(rng);
        const int y = uy(rng);
        const std::size_t row = static_cast<std::size_t>(y) * w;
        float* win = b_window_.data() + static_cast<std::size_t>(k) * span_;
        const int x0 = x - max_shift_ - 1;
        if (!sa.empty()) {
            a_val[k] = sa[row + x];
            std::copy_n(sb.data() + static_cast<std::size_t>(y) * wb + x0, span_, win);
        } else {
            smooth_span(pa + row, x, 1, &a_val[k]);
            smooth_span(pb + row, x0, span_, win);
        }
    }

    // Bin ranges cover every value the sample can reach at any shift.
    const auto [a_lo, a_hi] = std::minmax_element(a_val.begin(), a_val.end());
    const auto [b_lo, b_hi] = std::minmax_element(b_window_.begin(), b_window_.end());
    if (*a_hi - *a_lo < 1e-6f || *b_hi - *b_lo < 1e-6f)
        throw DegenerateInputError("channel has no intensity variation");
    const double a_scale = (bins_ - 1) / static_cast<double>(*a_hi - *a_lo);
    a_bin_.resize(n);
    for (int k = 0; k < n; ++k)
        a_bin_[k] = static_cast<float>((a_val[k] - *a_lo) * a_scale);
    b_min_ = *b_lo;
    b_scale_ = (bins_ - 1) / static_cast<double>(*b_hi - *b_lo);
}

void MiEstimator::smooth(std::vector<double>& hist) const {
    if (kernel_.empty())
        return;
    const int n = bins_;
    const int r = static_cast<int>(kernel_.size() / 2);
    std::vector<double> tmp(hist.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        const double* row = hist.data() + static_cast<std::size_t>(i) * n;
        double* out = tmp.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double v = row[j];
            if (v == 0.0)
                continue;
            for (int t = std::max(-r, -j); t <= std::min(r, n - 1 - j); ++t)
                out[j + t] += v * kernel_[t + r];
        }
    }
    std::fill(hist.begin(), hist.end(), 0.0);
    for (int i = 0; i < n; ++i) {
        const double* row = tmp.data() + static_cast<std::size_t>(i) * n;
        for (int t = std::max(-r, -i); t <= std::min(r, n - 1 - i); ++t) {
            const double k = kernel_[t + r];
            double* out = hist.data() + static_cast<std::size_t>(i + t) * n;
            for (int j = 0; j < n; ++j)
                out[j] += k * row[j];
        }
    }
}

double MiEstimator::evaluate(double shift, double* gradient) const {
    const int n = bins_;
    std::vector<double> joint(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<double> djoint;
    if (gradient)
        djoint.assign(joint.size(), 0.0);

    const double fs = std::floor(shift);
    const int offset = static_cast<int>(fs) + max_shift_ + 1;
    const double fx = shift - fs;
    for (std::size_t k = 0; k < a_bin_.size(); ++k) {
        const float* p = b_window_.data() + k * span_ + offset;
        const double slope = static_cast<double>(p[1]) - p[0];
        const double bv = p[0] + fx * slope;
        double tb = std::clamp((bv - b_min_) * b_scale_, 0.0, n - 1.0);
        int ib = std::min(static_cast<int>(tb), n - 2);
        const double wb = tb - ib;
        const double ta = a_bin_[k];
        const int ia = std::min(static_cast<int>(ta), n - 2);
        const double wa = ta - ia;
        double* r0 = joint.data() + static_cast<std::size_t>(ia) * n + ib;
        double* r1 = r0 + n;
        r0[0] += (1 - wa) * (1 - wb);
        r0[1] += (1 - wa) * wb;
        r1[0] += wa * (1 - wb);
        r1[1] += wa * wb;
        if (gradient) {
            const double dtb = slope * b_scale_;
            double* d0 = djoint.data() + static_cast<std::size_t>(ia) * n + ib;
            double* d1 = d0 + n;
            d0[0] -= (1 - wa) * dtb;
            d0[1] += (1 - wa) * dtb;
            d1[0] -= wa * dtb;
            d1[1] += wa * dtb;
        }
    }
    smooth(joint);
    if (gradient)
        smooth(djoint);

    double total = 0.0, dtotal = 0.0;
    std::vector<double> pa(n, 0.0), pbm(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double v = joint[static_cast<std::size_t>(i) * n + j];
            pa[i] += v;
            pbm[j] += v;
            total += v;
        }
    if (gradient)
        for (double v : djoint)
            dtotal += v;
    std::vector<double> log_pa(n), log_pb(n);
    for (int i = 0; i < n; ++i) {
        log_pa[i] = pa[i] > 0.0 ? std::log(pa[i] / total) : 0.0;
        log_pb[i] = pbm[i] > 0.0 ? std::log(pbm[i] / total) : 0.0;
    }
    double mi = 0.0, dmi = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * n + j;
            const double v = joint[idx];
            if (v <= 0.0)
                continue;
            const double p = v / total;
            const double lr = std::log(p) - log_pa[i] - log_pb[j];
            mi += p * lr;
            if (gradient) {
                const double dp = djoint[idx] / total - v * dtotal / (total * total);
                dmi += dp * lr;
            }
        }
    if (gradient)
        *gradient = dmi;
    return std::max(mi, 0.0);
}

double MiEstimator::mi(double shift_px) const {
    if (std::abs(shift_px) > max_shift_)
        throw PreconditionError("shift outside the estimator's sampled range");
    return evaluate(shift_px, nullptr);
}

double MiEstimator::mi_with_gradient(double shift_px, double& gradient) const {
    if (std::abs(shift_px) > max_shift_)
        throw PreconditionError("shift outside the estimator's sampled range");
    return evaluate(shift_px, &gradient);
}

double MiEstimator::entropy_a() const {
    // Marginal of a from the same smoothed joint used by mi().
    const int n = bins_;
    std::vector<double> hist(static_cast<std::size_t>(n) * n, 0.0);
    for (float ta : a_bin_) {
        const int ia = std::min(static_cast<int>(ta), n - 2);
        const double wa = ta - ia;
        hist[static_cast<std::size_t>(ia) * n] += 1 - wa;
        hist[static_cast<std::size_t>(ia + 1) * n] += wa;
    }
    smooth(hist);
    std::vector<double> pa(n, 0.0);
    double total = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            pa[i] += hist[static_cast<std::size_t>(i) * n + j];
            total += hist[static_cast<std::size_t>(i) * n + j];
        }
    double h = 0.0;
    for (double v : pa)
        if (v > 0.0)
            h -= v / total * std::log(v / total);
    return h;
}

double mutual_information(const Image& a, const Image& b, double shift_px, const AfConfig& cfg) {
    const int max_shift = static_cast<int>(std::ceil(std::abs(shift_px))) + 1;
    return MiEstimator(a, b, cfg, max_shift).mi(shift_px);
}

namespace {

// Narrow frames shrink the search rather than fail.
int search_range(int width, const AfConfig& cfg) {
    const int range = std::min(cfg.coarse_range_px, (width - 8) / 2 - 3);
    if (range < 2)
        throw PreconditionError("frame too narrow for a separation search");
    return range;
}

DefocusEstimate run_search(const MiEstimator& est, int range, const AfConfig& cfg) {
    std::vector<double> scores;
    scores.reserve(2 * range + 1);
    int peak = 0;
    double best = est.mi(0.0);
    scores.push_back(best);
    for (int k = 1; k <= range; ++k)
        for (int s : {k, -k}) {
            const double v = est.mi(s);
            scores.push_back(v);
            if (v > best) {
                best = v;
                peak = s;
            }
        }
    std::nth_element(scores.begin(), scores.begin() + scores.size() / 2, scores.end());
    const double median = scores[scores.size() / 2];

    DefocusEstimate out;
    out.coarse_peak_px = peak;
    out.prominence_nats = best - median;
    if (out.prominence_nats < cfg.min_prominence_nats) {
        char msg[128];
        std::snprintf(msg, sizeof msg, "MI peak prominence %.4f nats below %.4f", out.prominence_nats,
                      cfg.min_prominence_nats);
        throw LowConfidenceError(msg);
    }

    double s = peak, f = best, step = cfg.step_init_px;
    const double lo = std::max<double>(peak - 2, -range - 2);
    const double hi = std::min<double>(peak + 2, range + 2);
    int it = 0;
    while (it < cfg.max_iters) {
        ++it;
        double g = 0.0;
        est.mi_with_gradient(s, g);
        if (g != 0.0) {
            const double cand = std::clamp(s + (g > 0.0 ? step : -step), lo, hi);
            const double fc = est.mi(cand);
            if (fc > f) {
                s = cand;
                f = fc;
            } else {
                step /= 2.0;
            }
        } else {
            step /= 2.0;
        }
        if (step < cfg.converge_tol_px && it >= cfg.min_iters)
            break;
    }
    out.separation_px = s;
    out.mi_final = f;
    out.iterations = it;
    return out;
}

} // namespace

DefocusEstimate estimate_separation(const Image& frame, const AfConfig& cfg) {
    if (frame.channels() != 3)
        throw ChannelMismatchError("separation estimate needs a 3-channel dual-illumination frame");
    const int range = search_range(frame.width(), cfg);
    return run_search(MiEstimator(frame, 0, 1, cfg, range + 3), range, cfg);
}

DefocusEstimate estimate_separation(const Image& red, const Image& green, const AfConfig& cfg) {
    const int range = search_range(red.width(), cfg);
    return run_search(MiEstimator(red, green, cfg, range + 3), range, cfg);
}


double defocus_from_separation(double separation_px, const CalibrationModel& cal) {
    if (!cal.has_separation())
        throw CalibrationError("separation calibration missing");
    return (separation_px - cal.sep_offset_px) / cal.sep_slope_px_per_um;
}

RingCorrection ring_correction(double defocus_um, const CalibrationModel& cal, int current_steps, int limit_steps) {
    if (!cal.has_ring())
        throw CalibrationError("ring calibration missing");
    RingCorrection rc;
    const double raw = std::round(defocus_um / cal.object_um_per_step);
    rc.steps = static_cast<int>(std::clamp(raw, -1e9, 1e9));
    if (limit_steps > 0) {
        const long target = static_cast<long>(current_steps) + rc.steps;
        const long bounded = std::clamp<long>(target, -limit_steps, limit_steps);
        if (bounded != target) {
            rc.clamped = true;
            rc.steps = static_cast<int>(bounded - current_steps);
        }
    }
    return rc;
}

std::string estimate_to_json(const DefocusEstimate& est) {
    nlohmann::ordered_json j;
    j["separation_px"] = est.separation_px;
    j["defocus_um"] = est.defocus_um;
    j["iterations"] = est.iterations;
    j["mi_final"] = est.mi_final;
    j["coarse_peak_px"] = est.coarse_peak_px;
    return j.dump();
}

} // namespace wsi

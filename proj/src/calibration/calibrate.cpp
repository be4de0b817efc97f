#include "wsi/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "wsi/errors.hpp"

namespace wsi {

double brenner_sharpness(const Image& frame) {
    const int c = frame.channels() == 3 ? 1 : 0;
    const auto p = frame.plane(c);
    const int w = frame.width();
    const int h = frame.height();
    if (w < 3)
        throw PreconditionError("frame too narrow for a sharpness measure");
    double sum = 0.0;
    for (int y = 0; y < h; ++y) {
        const float* row = p.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x + 2 < w; ++x) {
            const double d = row[x + 2] - row[x];
            sum += d * d;
        }
    }
    return sum / (static_cast<double>(w - 2) * h);
}

namespace {

// Center of a sharpness peak: midpoint of the two half-level crossings,
// which is unbiased for a symmetric curve sampled on a coarse grid.
double half_level_center(const std::map<double, double>& samples) {
    if (samples.size() < 3)
        throw CalibrationError("too few focus samples");
    auto peak = std::max_element(samples.begin(), samples.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    double lo = peak->second;
    for (const auto& [pos, v] : samples)
        lo = std::min(lo, v);
    const double level = (peak->second + lo) / 2.0;
    auto crossing = [&](auto first, auto last) -> std::optional<double> {
        // Walk away from the peak until the curve falls below the level.
        auto prev = first;
        for (auto it = std::next(first); it != last; ++it) {
            if (it->second < level) {
                const double t = (prev->second - level) / (prev->second - it->second);
                return prev->first + t * (it->first - prev->first);
            }
            prev = it;
        }
        return std::nullopt;
    };
    const auto right = crossing(peak, samples.end());
    const auto rpeak = std::make_reverse_iterator(std::next(peak));
    const auto left = crossing(rpeak, samples.rend());
    if (!left || !right)
        throw CalibrationError("focus peak not bracketed by the search window");
    return (*left + *right) / 2.0;
}

double sharpness_at_z(DeviceClient& dev, double z_um) {
    dev.move_to(std::nullopt, std::nullopt, std::round(z_um) / 1000.0);
    dev.wait_idle();
    return brenner_sharpness(dev.capture());
}

double sharpness_at_ring(DeviceClient& dev, int ring) {
    dev.ring_move(ring - dev.ring_position());
    return brenner_sharpness(dev.capture());
}

double z_focus_search(DeviceClient& dev, double center_um, const RingSweepOptions& o) {
    center_um = std::round(center_um);
    std::map<double, double> coarse;
    const int nc = static_cast<int>(std::round(o.coarse_half_range_um / o.coarse_step_um));
    for (int k = -nc; k <= nc; ++k) {
        const double z = std::round(center_um + k * o.coarse_step_um);
        coarse[z] = sharpness_at_z(dev, z);
    }
    const double zc = std::max_element(coarse.begin(), coarse.end(), [](const auto& a, const auto& b) {
                          return a.second < b.second;
                      })->first;
    std::map<double, double> fine;
    const int nf = static_cast<int>(std::round(o.fine_half_range_um / o.fine_step_um));
    for (int k = -nf; k <= nf; ++k) {
        const double z = std::round(zc + k * o.fine_step_um);
        fine[z] = coarse.count(z) ? coarse[z] : sharpness_at_z(dev, z);
    }
    return half_level_center(fine);
}

// Stage focus to the nearest micron, then fractional best focus on the ring.
double ring_focus(DeviceClient& dev, const SeparationSweepOptions& opts) {
    const DeviceStatus st = dev.status();
    const double z_f = z_focus_search(dev, st.z_mm * 1000.0, RingSweepOptions{});
    dev.move_to(std::nullopt, std::nullopt, std::round(z_f) / 1000.0);
    dev.wait_idle();

    const int r0 = dev.ring_position();
    std::map<double, double> samples;
    for (int k = -opts.ring_coarse_half_range; k <= opts.ring_coarse_half_range; k += opts.ring_coarse_step)
        samples[r0 + k] = sharpness_at_ring(dev, r0 + k);
    // Refine both half-level crossings at single-step resolution.
    auto peak = std::max_element(samples.begin(), samples.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    double lo = peak->second;
    for (const auto& [pos, v] : samples)
        lo = std::min(lo, v);
    const double level = (peak->second + lo) / 2.0;
    std::vector<int> refine;
    for (auto it = samples.begin(); std::next(it) != samples.end(); ++it) {
        const auto nx = std::next(it);
        if ((it->second - level) * (nx->second - level) < 0.0)
            for (int r = static_cast<int>(it->first) + 1; r < static_cast<int>(nx->first); ++r)
                refine.push_back(r);
    }
    for (int r : refine)
        samples[r] = sharpness_at_ring(dev, r);
    return half_level_center(samples);
}

} // namespace

RingCalibration calibrate_ring(DeviceClient& dev, const OpticsConfig& optics, const RingSweepOptions& opts) {
    if (opts.ring_positions.size() < 3)
        throw CalibrationError("ring sweep needs at least 3 positions, got " +
                               std::to_string(opts.ring_positions.size()));
    optics.validate();
    dev.set_led(LedMode::brightfield);
    const int start_ring = dev.ring_position();
    const DeviceStatus st = dev.status();
    double z_start = st.z_mm * 1000.0;

    // Visit positions outward from the start so each search is centered on
    // its neighbour's result.
    std::vector<int> order = opts.ring_positions;
    std::sort(order.begin(), order.end(), [](int a, int b) {
        return std::abs(a) != std::abs(b) ? std::abs(a) < std::abs(b) : a > b;
    });
    std::map<int, double> z_focus;
    for (int r : order) {
        RingSweepOptions search = opts;
        double center = z_start;
        if (z_focus.size() == 1) {
            center = z_focus.begin()->second;
        } else if (z_focus.size() >= 2) {
            // Extrapolate from what has been measured; the window can shrink.
            std::vector<std::pair<double, double>> pts(z_focus.begin(), z_focus.end());
            double mx = 0.0, my = 0.0, sxx = 0.0, sxy = 0.0;
            for (const auto& [x, y] : pts) {
                mx += x / pts.size();
                my += y / pts.size();
            }
            for (const auto& [x, y] : pts) {
                sxx += (x - mx) * (x - mx);
                sxy += (x - mx) * (y - my);
            }
            center = my + sxy / sxx * (r - mx);
            search.coarse_half_range_um = std::min(opts.coarse_half_range_um, 10.0);
        }
        dev.ring_move(start_ring + r - dev.ring_position());
        z_focus[r] = z_focus_search(dev, center, search);
    }

    RingCalibration out;
    for (const auto& [r, z] : z_focus)
        out.points.emplace_back(r, z);
    for (std::size_t i = 1; i < out.points.size(); ++i)
        if (!(out.points[i].second < out.points[i - 1].second))
            throw CalibrationError("ring sweep is not monotone: in-focus z does not fall as the ring advances");
    const LineFit fit = fit_line(out.points);
    out.model.object_um_per_step = -fit.slope;
    out.model.image_um_per_step = out.model.object_um_per_step * optics.axial_magnification();
    out.model.fit_residual_rms = fit.residual_rms;
    out.model.source = CalibrationSource::fitted;
    out.model.timestamp = iso8601_now();
    out.z_focus_at_start_um = z_focus.count(0) ? z_focus[0] : fit.intercept;

    dev.ring_move(start_ring - dev.ring_position());
    dev.move_to(std::nullopt, std::nullopt, std::round(out.z_focus_at_start_um) / 1000.0);
    dev.wait_idle();
    return out;
}

SeparationCalibration calibrate_separation(DeviceClient& dev, const CalibrationModel& ring_cal, const AfConfig& af,
                                           const SeparationSweepOptions& opts) {
    if (!ring_cal.has_ring())
        throw CalibrationError("separation calibration needs a ring calibration");
    if (!(opts.defocus_step_um > 0.0) || opts.defocus_max_um <= opts.defocus_min_um)
        throw PreconditionError("defocus sweep range is empty");
    const double c = ring_cal.object_um_per_step;
    SeparationCalibration out;
    std::vector<std::optional<std::pair<double, double>>> poses(opts.positions_mm.begin(), opts.positions_mm.end());
    if (poses.empty())
        poses.emplace_back();
    for (const auto& pose : poses) {
        dev.set_led(LedMode::brightfield);
        if (pose) {
            dev.move_to(pose->first, pose->second);
            dev.wait_idle();
            dev.dwell(opts.settle_s);
        }
        const double r_f = ring_focus(dev, opts);
        out.ring_focus_steps.push_back(r_f);

        dev.set_led(LedMode::rg_dual);
        for (double d = opts.defocus_min_um; d <= opts.defocus_max_um + 1e-9; d += opts.defocus_step_um) {
            const int r = static_cast<int>(std::lround(r_f - d / c));
            dev.ring_move(r - dev.ring_position());
            const double actual = (r_f - r) * c;
            try {
                const DefocusEstimate est = estimate_separation(dev.capture(), af);
                out.points.emplace_back(actual, est.separation_px);
            } catch (const LowConfidenceError& e) {
                throw CalibrationError(std::string("separation estimate failed during sweep: ") + e.what());
            } catch (const DegenerateInputError& e) {
                throw CalibrationError(std::string("separation estimate failed during sweep: ") + e.what());
            }
        }
        dev.set_led(LedMode::brightfield);
        dev.ring_move(static_cast<int>(std::lround(r_f)) - dev.ring_position());
    }

    const LineFit fit = fit_line(out.points);
    if (fit.residual_rms > opts.max_residual_px)
        throw CalibrationError("separation fit residual " + std::to_string(fit.residual_rms) + " px exceeds " +
                               std::to_string(opts.max_residual_px) + " px");
    const std::size_t per_pose = out.points.size() / poses.size();
    for (std::size_t i = 1; i < out.points.size(); ++i)
        if (i % per_pose != 0 && (out.points[i].second - out.points[i - 1].second) * fit.slope <= 0.0)
            throw CalibrationError("separation is not monotone in defocus");
    out.model = ring_cal;
    out.model.sep_slope_px_per_um = fit.slope;
    out.model.sep_offset_px = fit.intercept;
    out.model.fit_residual_rms = fit.residual_rms;
    out.model.source = CalibrationSource::fitted;
    out.model.timestamp = iso8601_now();
    return out;
}

std::string describe_ring_sweep(const RingSweepOptions& opts) {
    std::ostringstream os;
    os << "ring sweep: " << opts.ring_positions.size() << " positions (steps):";
    for (int r : opts.ring_positions)
        os << ' ' << r;
    const int coarse = 2 * static_cast<int>(std::round(opts.coarse_half_range_um / opts.coarse_step_um)) + 1;
    const int fine = 2 * static_cast<int>(std::round(opts.fine_half_range_um / opts.fine_step_um)) + 1;
    os << "\nper position: Z search +/-" << opts.coarse_half_range_um << " um in " << opts.coarse_step_um
       << " um steps (" << coarse << " frames), then +/-" << opts.fine_half_range_um << " um in "
       << opts.fine_step_um << " um steps (up to " << fine << " frames)\n";
    return os.str();
}

std::string describe_separation_sweep(const SeparationSweepOptions& opts, const CalibrationModel& ring_cal) {
    std::ostringstream os;
    os << "focus: Z search, then ring scan +/-" << opts.ring_coarse_half_range << " steps every "
       << opts.ring_coarse_step << " with single-step refinement at the half-level crossings\n";
    os << "defocus sweep (um):";
    for (double d = opts.defocus_min_um; d <= opts.defocus_max_um + 1e-9; d += opts.defocus_step_um)
        os << ' ' << d;
    os << "\nring offsets from focus (steps):";
    for (double d = opts.defocus_min_um; d <= opts.defocus_max_um + 1e-9; d += opts.defocus_step_um)
        os << ' ' << std::lround(-d / ring_cal.object_um_per_step);
    os << "\nfit gate: residual RMS <= " << opts.max_residual_px << " px\n";
    return os.str();
}

} // namespace wsi

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wsi/autofocus.hpp"
#include "wsi/calibration.hpp"
#include "wsi/device.hpp"

namespace wsi {

/// Brenner gradient of the green channel (mean squared two-pixel difference
/// along x). Used only as a calibration reference for "in focus".
double brenner_sharpness(const Image& frame);

struct RingSweepOptions {
    std::vector<int> ring_positions{-400, -300, -200, -100, 0, 100, 200, 300, 400};
    double coarse_half_range_um = 30.0;
    double coarse_step_um = 2.0;
    double fine_half_range_um = 6.0;
    double fine_step_um = 1.0;
};

struct RingCalibration {
    CalibrationModel model;
    // (ring steps relative to start, in-focus stage z in um)
    std::vector<std::pair<double, double>> points;
    double z_focus_at_start_um = 0.0;
};

/// Steps the focus ring through the sweep; at each position the precise Z
/// stage is searched for best focus. The compensating Z travel per ring step
/// is the object-side gain; the image-side gain follows from the axial
/// magnification. Leaves the ring where it started and the stage in focus.
RingCalibration calibrate_ring(DeviceClient& dev, const OpticsConfig& optics, const RingSweepOptions& opts = {});

struct SeparationSweepOptions {
    double defocus_min_um = -15.0;
    double defocus_max_um = 15.0;
    double defocus_step_um = 2.5;
    int ring_coarse_half_range = 64;
    int ring_coarse_step = 4;
    double max_residual_px = 1.0;
    // Stage positions (mm) to sweep at; the fit pools all of them, which
    // averages out specimen-dependent estimator bias. Empty: current pose.
    std::vector<std::pair<double, double>> positions_mm;
    double settle_s = 0.4;
};

struct SeparationCalibration {
    CalibrationModel model;
    // (true defocus um, measured separation px)
    std::vector<std::pair<double, double>> points;
    // Fractional in-focus ring position found at each swept position.
    std::vector<double> ring_focus_steps;
};

/// Focuses with the Z stage and ring, then steps known defocus offsets with
/// the ring and fits separation against defocus. Requires the ring part of
/// `ring_cal`.
SeparationCalibration calibrate_separation(DeviceClient& dev, const CalibrationModel& ring_cal, const AfConfig& af,
                                           const SeparationSweepOptions& opts = {});

std::string describe_ring_sweep(const RingSweepOptions& opts);
std::string describe_separation_sweep(const SeparationSweepOptions& opts, const CalibrationModel& ring_cal);

} // namespace wsi

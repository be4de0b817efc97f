#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>

#include "wsi/simscope.hpp"

namespace wsi {

enum class CalibrationSource { nominal, fitted };

/// Linear maps between focus-ring steps, image- and object-side focus shift,
/// and red/green separation. A default-constructed model is uncalibrated.
struct CalibrationModel {
    double image_um_per_step = 0.0;
    double object_um_per_step = 0.0;
    double sep_slope_px_per_um = 0.0;
    double sep_offset_px = 0.0;
    // RMS residual of the most recent fit: pixels for the separation fit,
    // micrometres for a ring-only fit.
    double fit_residual_rms = 0.0;
    CalibrationSource source = CalibrationSource::nominal;
    std::string timestamp;

    bool has_ring() const { return object_um_per_step > 0.0; }
    bool has_separation() const { return sep_slope_px_per_um != 0.0; }

    /// 8 um / 0.08 um per step and the geometric separation slope, offset 0.
    static CalibrationModel nominal(const OpticsConfig& optics);

    friend bool operator==(const CalibrationModel&, const CalibrationModel&) = default;
};

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual_rms = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LineFit fit_line(std::span<const std::pair<double, double>> points);

std::string calibration_to_json(const CalibrationModel& model);
CalibrationModel calibration_from_json(const std::string& text);
void save_calibration(const CalibrationModel& model, const std::filesystem::path& path);
CalibrationModel load_calibration(const std::filesystem::path& path);

/// Current UTC time as ISO-8601 (seconds resolution).
std::string iso8601_now();

} // namespace wsi

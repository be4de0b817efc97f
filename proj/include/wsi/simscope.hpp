#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wsi/image.hpp"

namespace wsi {

/// Optical train and sensor. Defaults: 20X/0.75 objective behind a 100 mm
/// photographic lens (the objective is designed for a 200 mm tube lens, so
/// lateral magnification is 10), 0.4 illumination NA, 2.4 um sensor pitch on
/// a 5472 x 3648 sensor.
struct OpticsConfig {
    double objective_mag = 20.0;
    double objective_na = 0.75;
    double illum_na = 0.4;
    double tube_focal_mm = 100.0;
    double nominal_tube_focal_mm = 200.0;
    double pixel_pitch_um = 2.4;
    double wavelength_um = 0.55;
    int sensor_width = 5472;
    int sensor_height = 3648;

    double lateral_magnification() const { return objective_mag * tube_focal_mm / nominal_tube_focal_mm; }
    double axial_magnification() const { return lateral_magnification() * lateral_magnification(); }
    /// Pixel size referred to the specimen.
    double object_pixel_um() const { return pixel_pitch_um / lateral_magnification(); }
    double fov_width_mm() const { return sensor_width * object_pixel_um() / 1000.0; }
    double fov_height_mm() const { return sensor_height * object_pixel_um() / 1000.0; }
    /// lambda / NA^2
    double depth_of_field_um() const { return wavelength_um / (objective_na * objective_na); }

    void validate() const;
};

/// Simulator physics that the optics alone do not determine.
struct SimConfig {
    double object_um_per_step = 0.08; // focus ring gain at the specimen
    double exposure_s = 0.01;
    double readout_s = 0.03;
    double read_noise_sigma = 0.005;
    double k1 = 5e-9; // pincushion, px^-2, about the frame center
    double k2 = 0.0;  // px^-4
    // Post-actuation vibration: amplitude(t) = A * exp(-t / tau), in pixels.
    double vibration_amplitude_px_pad = 0.9;
    double vibration_amplitude_px_no_pad = 1.8;
    double vibration_tau_pad_s = 0.12;
    double vibration_tau_no_pad_s = 0.30;
    double stage_velocity_mm_s = 2.4;
    double z_velocity_mm_s = 1.0;
    int ring_limit_steps = 2000;
    bool isolation_pad = true;
};

enum class LedMode { brightfield, rg_dual };

struct FocalComponent {
    double amplitude_um = 0.0;
    double fx_per_mm = 0.0;
    double fy_per_mm = 0.0;
    double phase = 0.0;
};

/// Smooth band-limited height field, clamped to +/- amplitude.
struct FocalSurface {
    double amplitude_um = 0.0;
    std::vector<FocalComponent> components;

    double height_um(double x_mm, double y_mm) const;
};

enum class SpecimenKind { tissue, blank, hole_mask };

struct Specimen {
    Image texture; // RGB, in focus, sampled at texture_pitch_um
    double texture_pitch_um = 0.24;
    FocalSurface focal_surface;
    std::uint64_t seed = 0;
    SpecimenKind kind = SpecimenKind::tissue;
    double hole_pitch_um = 12.0;
    double hole_diameter_um = 4.0;

    double width_mm() const { return texture.width() * texture_pitch_um / 1000.0; }
    double height_mm() const { return texture.height() * texture_pitch_um / 1000.0; }
};

struct SpecimenParams {
    double width_mm = 1.0;
    double height_mm = 1.0;
    double pixel_um = 0.24;
    double focal_amplitude_um = 10.0;
    std::uint64_t seed = 1;
    SpecimenKind kind = SpecimenKind::tissue;
    double hole_pitch_um = 12.0;
    double hole_diameter_um = 4.0;
};

/// Procedural H&E-like slide (hematoxylin nuclei over an eosin stroma),
/// a blank slide, or a hole-array mask.
Specimen make_specimen(const SpecimenParams& params);

void save_specimen(const Specimen& spec, const std::filesystem::path& dir);
Specimen load_specimen(const std::filesystem::path& dir);

struct CaptureState {
    double stage_x_mm = 0.0; // field-of-view center, slide coordinates
    double stage_y_mm = 0.0;
    double stage_z_um = 0.0;
    int ring_steps = 0;
    LedMode led_mode = LedMode::brightfield;
    double x_velocity_mm_s = 0.0;
    double y_velocity_mm_s = 0.0;
    // Seconds since the last XY actuation finished; negative means the stage
    // has not moved (no vibration).
    double time_since_move_s = -1.0;
    bool isolation_pad = true;
    std::uint64_t noise_seed = 0;
};

/// Red/green copy separation for a given defocus, in sensor pixels.
double channel_shift_px(double defocus_um, const OpticsConfig& cfg);

/// Net defocus at the field center: focal height minus the combined
/// stage and ring focus position. Positive means the specimen sits beyond
/// the focal plane.
double net_defocus_um(const Specimen& spec, const CaptureState& st, const SimConfig& sim);

/// Vibration envelope (pixels) at the capture described by `st`.
double vibration_amplitude_px(const CaptureState& st, const SimConfig& sim);

struct RenderOptions {
    bool noise = true;
    bool distortion = true;
};

/// The frame the camera records for the given state. Always 3 channels; in
/// rg_dual mode the blue channel carries only read noise.
Image render(const Specimen& spec, const CaptureState& st, const OpticsConfig& optics,
             const SimConfig& sim, const RenderOptions& opts = {});

/// Antialiased uniform disk PSF of the given radius, normalized. Radius below
/// half a pixel yields the identity.
std::vector<float> disk_kernel(double radius_px, int& half_width);

} // namespace wsi

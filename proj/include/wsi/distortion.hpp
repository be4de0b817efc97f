#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wsi/image.hpp"

namespace wsi {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Radial map from distorted pixel coordinates to ideal ones:
/// ideal = c + scale * (d - c) * (1 + k1 r^2 + k2 r^4), r = |d - c|.
/// Pixel centres sit on integer coordinates.
struct DistortionModel {
    double center_x = 0.0;
    double center_y = 0.0;
    double k1 = 0.0; // px^-2
    double k2 = 0.0; // px^-4
    double scale = 1.0;
    double residual_rms_px = 0.0;

    static DistortionModel identity(int width, int height);
    bool is_identity() const { return k1 == 0.0 && k2 == 0.0 && scale == 1.0; }

    Point2 to_ideal(Point2 d) const;
    /// Inverse of to_ideal (Newton on the radius).
    Point2 to_distorted(Point2 ideal) const;
    /// True when the radial map is strictly increasing out to the farthest
    /// corner of a width x height frame.
    bool invertible_over(int width, int height) const;

    friend bool operator==(const DistortionModel&, const DistortionModel&) = default;
};

struct GridDetection {
    std::vector<Point2> centroids;
    // (row, col) per centroid, relative to the dot nearest the frame centre.
    std::vector<std::pair<int, int>> grid_assignment;
    double pitch_px = 0.0;
    int image_width = 0;
    int image_height = 0;
    int expected_points = 0;
};

struct GridOptions {
    // Components smaller than this many pixels are noise.
    int min_area_px = 6;
    double min_detected_fraction = 0.8;
    // A neighbour must land within this fraction of the pitch of its
    // predicted position.
    double match_tolerance = 0.3;
};

/// Otsu threshold, connected components (8-connected), intensity-weighted
/// centroids and row/col assignment by walking the lattice outward from the
/// centre. Works for bright holes on dark or dark dots on bright.
GridDetection detect_grid(const Image& mask, const GridOptions& opts = {});

struct FitOptions {
    // Known lattice pitch of the ideal grid in pixels; sets `scale`.
    // Without it the scale stays 1 (centre magnification preserved).
    std::optional<double> ideal_pitch_px;
    double max_residual_rms_px = 1.0;
};

/// Least-squares fit of the radial model about a fitted centre. The ideal
/// grid is an unknown affine lattice, so a rotated or offset mask is fine.
DistortionModel fit_distortion(const GridDetection& det, const FitOptions& opts = {});

/// Precomputed inverse map for one (model, frame size): per output pixel the
/// top-left source index and 16-bit fixed-point bilinear weights.
class RemapTable {
public:
    RemapTable(const DistortionModel& model, int width, int height);

    Image apply(const Image& img) const;
    /// Writes into `out`, reusing its storage when the shape already matches
    /// (a 20 MP RGB allocation costs about as much as the remap itself).
    void apply(const Image& img, Image& out) const;

    int width() const { return width_; }
    int height() const { return height_; }
    const DistortionModel& model() const { return model_; }

private:
    DistortionModel model_;
    int width_;
    int height_;
    std::vector<std::uint32_t> offset_;
    std::vector<std::uint16_t> wx_;
    std::vector<std::uint16_t> wy_;
};

/// Remap through a shared table cache keyed by (model, frame size); safe to
/// call concurrently on different frames.
Image correct(const Image& img, const DistortionModel& model);
void correct(const Image& img, const DistortionModel& model, Image& out);
std::shared_ptr<const RemapTable> cached_remap(const DistortionModel& model, int width, int height);

struct DotGridSpec {
    int width = 3300;
    int height = 3300;
    double pitch_px = 300.0;
    double radius_px = 20.0;
    // Forward pincushion applied to the ideal lattice: r_d = r (1 + k1 r^2 + k2 r^4).
    double k1 = 0.0;
    double k2 = 0.0;
    float dot = 0.95f;
    float background = 0.05f;
};

/// Analytically antialiased dot lattice centred on the frame, warped by the
/// forward pincushion. Single channel.
Image synthetic_dot_grid(const DotGridSpec& spec);
/// Ideal (unwarped) positions of the lattice sites of `spec` inside the frame.
std::vector<Point2> dot_grid_sites(const DotGridSpec& spec);

std::string distortion_to_json(const DistortionModel& model);
DistortionModel distortion_from_json(const std::string& text);
void save_distortion(const DistortionModel& model, const std::filesystem::path& path);
DistortionModel load_distortion(const std::filesystem::path& path);

} // namespace wsi

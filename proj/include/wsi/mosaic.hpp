#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "wsi/image.hpp"
#include "wsi/scanner.hpp"

namespace wsi {

/// A tile and where the stage says it belongs. Positions are in slide
/// pixels: the global coordinate of the tile's pixel (0, 0).
struct MosaicTile {
    int col = 0;
    int row = 0;
    Image image;
    double nominal_x_px = 0.0;
    double nominal_y_px = 0.0;
};

struct PlacedTile {
    int col = 0;
    int row = 0;
    double nominal_x_px = 0.0;
    double nominal_y_px = 0.0;
    double x_px = 0.0;
    double y_px = 0.0;
    double confidence = 0.0;
};

/// Nominal position from the stage pose: the field centre minus half the
/// frame, in units of the object-side pixel.
MosaicTile make_mosaic_tile(const TilePose& pose, Image image, double object_pixel_um);

struct PairShift {
    double dx = 0.0;
    double dy = 0.0;
    double confidence = 0.0; // phase-correlation peak height, ~1 for identical content
};

/// Translation t with b(x) ~= a(x + t), by phase correlation of equally
/// sized windows (Hann-tapered, sub-pixel peak).
PairShift phase_correlate(const Image& a, const Image& b);

struct RefineOptions {
    double min_confidence = 0.08;
    // Refined positions stay within this fraction of the tile size of nominal.
    double max_offset_fraction = 0.25;
    // Smallest overlap (px) worth correlating.
    int min_overlap_px = 16;
};

/// Pairwise phase correlation over every overlapping neighbour pair, then a
/// weighted least-squares solve for all positions. Pairs below the
/// confidence floor are ignored; tiles left without constraints keep their
/// nominal position with confidence 0.
std::vector<PlacedTile> refine_offsets(const std::vector<MosaicTile>& tiles, const RefineOptions& opts = {});

/// Placement without refinement.
std::vector<PlacedTile> nominal_placement(const std::vector<MosaicTile>& tiles);

struct BlendOptions {
    std::size_t max_canvas_pixels = 64u << 20;
    int threads = 0; // 0: hardware concurrency
};

struct Mosaic {
    Image image;
    // Global slide-pixel coordinate of canvas pixel (0, 0).
    double origin_x_px = 0.0;
    double origin_y_px = 0.0;
};

/// Linear feathering: each tile weighs its pixels by distance to its own
/// border, canvas = weighted mean. Sub-pixel placement by bilinear sampling.
/// Throws CanvasTooLargeError above the configured pixel cap.
Mosaic blend(const std::vector<MosaicTile>& tiles, const std::vector<PlacedTile>& placed,
             const BlendOptions& opts = {});

std::string layout_json(const std::vector<PlacedTile>& placed, const Mosaic* mosaic = nullptr);

/// Tiled-output mode for canvases above the cap: every tile written as
/// tile_<col>_<row>.png with its placement in layout.json.
void write_tiled_layout(const std::vector<MosaicTile>& tiles, const std::vector<PlacedTile>& placed,
                        const std::filesystem::path& dir);

/// Reads scan.json and the tile files of a scan directory.
std::vector<MosaicTile> load_scan_tiles(const std::filesystem::path& dir);

} // namespace wsi

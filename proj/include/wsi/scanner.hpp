#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wsi/autofocus.hpp"
#include "wsi/calibration.hpp"
#include "wsi/device.hpp"
#include "wsi/distortion.hpp"

namespace wsi {

struct Bounds {
    double x_mm = 0.0; // lower-left corner in slide coordinates
    double y_mm = 0.0;
    double width_mm = 0.0;
    double height_mm = 0.0;
};

struct TilePose {
    int index = 0;
    int col = 0;
    int row = 0;
    double x_mm = 0.0; // field-of-view centre
    double y_mm = 0.0;
};

/// Column-major serpentine: x advances per column, y runs within a column
/// and reverses direction on odd columns.
struct ScanPlan {
    std::vector<TilePose> tiles;
    int cols = 0;
    int rows = 0;
    double fov_width_mm = 0.0;
    double fov_height_mm = 0.0;
    double pitch_x_mm = 0.0;
    double pitch_y_mm = 0.0;
    double overlap = 0.0;
    Bounds bounds;
};

/// Tile count along one axis: 1 + ceil((extent - fov) / pitch), or 1 when
/// the extent fits in one field.
int tiles_along(double extent_mm, double fov_mm, double pitch_mm);

ScanPlan plan_scan(const Bounds& bounds, const OpticsConfig& optics, double overlap = 0.15);

struct ScanConfig {
    double overlap = 0.15;
    bool isolation_pad = true;
    // Static-capture settle; negative picks 0.2 s with the pad, 0.4 s without.
    double settle_s = -1.0;
    // Hardware timing the client plans around (must match the instrument).
    double stage_velocity_mm_s = 2.4;
    double exposure_s = 0.01;
    double readout_s = 0.03;
    int ring_limit_steps = 2000;
    bool autofocus = true;
    // Correct and write frames on worker threads while the next tile is
    // acquired; false runs correction inline after each capture.
    bool pipelined = true;
    int workers = 1;
    std::size_t queue_capacity = 4;

    double effective_settle_s() const { return settle_s >= 0.0 ? settle_s : (isolation_pad ? 0.2 : 0.4); }
    void validate() const;
};

/// Per-tile phase durations. Device phases (move, settle, capture) are the
/// instrument time the client commanded; compute phases are host wall time.
struct TileTiming {
    double move_s = 0.0;
    double af_compute_s = 0.0;
    double settle_s = 0.0;
    double capture_s = 0.0;
    double correct_s = 0.0;

    /// Time on the acquisition path; correction runs alongside when pipelined.
    double critical_path_s(bool pipelined) const {
        return move_s + af_compute_s + settle_s + capture_s + (pipelined ? 0.0 : correct_s);
    }
};

struct FocusEntry {
    TilePose pose;
    double separation_px = 0.0;
    double defocus_um = 0.0;
    int ring_steps_after = 0;
    bool low_confidence = false;
    bool clamped = false;
    TileTiming timing;

    std::string flags() const;
};

using FocusMap = std::vector<FocusEntry>;

/// Destination for corrected tiles. Implementations must be thread-safe.
class TileSink {
public:
    virtual ~TileSink() = default;
    virtual void write(const TilePose& pose, const Image& corrected) = 0;
};

/// tile_<col>_<row>.png (16-bit RGB), each written to a temporary name and
/// renamed, so only complete files ever appear.
class DirectorySink : public TileSink {
public:
    explicit DirectorySink(std::filesystem::path dir);
    void write(const TilePose& pose, const Image& corrected) override;
    static std::string tile_name(int col, int row);

private:
    std::filesystem::path dir_;
};

class MemorySink : public TileSink {
public:
    void write(const TilePose& pose, const Image& corrected) override;
    std::map<std::pair<int, int>, Image> tiles() const;

private:
    mutable std::mutex mu_;
    std::map<std::pair<int, int>, Image> tiles_;
};

struct TileContext {
    int previous_index = -1; // -1 before the first tile
    std::optional<TilePose> previous;
};

/// One tile of the acquisition state machine: LEDs to dual and move; AF
/// capture timed to the end of a y move (static after an x move); estimate,
/// ring correction, settle; brightfield static capture. Returns the raw
/// frame. A featureless AF frame leaves the ring alone and is flagged.
std::pair<Image, FocusEntry> acquire_tile(DeviceClient& dev, const TilePose& pose, const TileContext& ctx,
                                          const ScanConfig& cfg, const AfConfig& af, const CalibrationModel& cal);

struct ScanReport {
    int tiles = 0;
    bool pipelined = true;
    double wall_s = 0.0;
    TileTiming mean;
    double per_tile_s = 0.0;
    int tiles_15mm = 0;
    double extrapolated_15mm_s = 0.0;
    double reference_15mm_s = 120.0;
};

struct ScanResult {
    FocusMap focus_map;
    ScanReport report;
    bool completed = false;
    std::string error; // set when the device failed mid-scan
};

/// Runs the plan. On a device failure acquisition stops, frames already
/// captured are still corrected and written, and the partial focus map is
/// returned with `completed == false`.
ScanResult run_scan(DeviceClient& dev, const ScanPlan& plan, const ScanConfig& cfg, const AfConfig& af,
                    const CalibrationModel& cal, const DistortionModel& distortion, TileSink& sink,
                    const OpticsConfig& optics);

ScanReport summarize(const FocusMap& map, const ScanConfig& cfg, const OpticsConfig& optics, double wall_s);
std::string report_text(const ScanReport& r);
std::string report_json(const ScanReport& r, const FocusMap& map);

std::string focus_map_csv(const FocusMap& map);
void write_focus_map(const FocusMap& map, const std::filesystem::path& path);

/// scan.json: optics pixel size, plan geometry and tile file list; what the
/// stitcher needs to place tiles.
std::string scan_manifest_json(const ScanPlan& plan, const OpticsConfig& optics);

} // namespace wsi

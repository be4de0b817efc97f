#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "common/json_util.hpp"
#include "wsi/errors.hpp"
#include "wsi/raster_io.hpp"
#include "wsi/scanner.hpp"

namespace wsi {

DirectorySink::DirectorySink(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::string DirectorySink::tile_name(int col, int row) {
    return "tile_" + std::to_string(col) + "_" + std::to_string(row) + ".png";
}

void DirectorySink::write(const TilePose& pose, const Image& corrected) {
    write_raster(corrected, dir_ / tile_name(pose.col, pose.row), 16);
}

void MemorySink::write(const TilePose& pose, const Image& corrected) {
    std::lock_guard lock(mu_);
    tiles_[{pose.col, pose.row}] = corrected;
}

std::map<std::pair<int, int>, Image> MemorySink::tiles() const {
    std::lock_guard lock(mu_);
    return tiles_;
}

ScanReport summarize(const FocusMap& map, const ScanConfig& cfg, const OpticsConfig& optics, double wall_s) {
    ScanReport r;
    r.tiles = static_cast<int>(map.size());
    r.pipelined = cfg.pipelined;
    r.wall_s = wall_s;
    if (!map.empty()) {
        for (const FocusEntry& e : map) {
            r.mean.move_s += e.timing.move_s;
            r.mean.af_compute_s += e.timing.af_compute_s;
            r.mean.settle_s += e.timing.settle_s;
            r.mean.capture_s += e.timing.capture_s;
            r.mean.correct_s += e.timing.correct_s;
        }
        const double n = static_cast<double>(map.size());
        r.mean.move_s /= n;
        r.mean.af_compute_s /= n;
        r.mean.settle_s /= n;
        r.mean.capture_s /= n;
        r.mean.correct_s /= n;
    }
    r.per_tile_s = r.mean.critical_path_s(cfg.pipelined);
    // A pipeline cannot run faster than its slowest stage.
    if (cfg.pipelined)
        r.per_tile_s = std::max(r.per_tile_s, r.mean.correct_s / cfg.workers);
    const ScanPlan big = plan_scan({0.0, 0.0, 15.0, 15.0}, optics, cfg.overlap);
    r.tiles_15mm = static_cast<int>(big.tiles.size());
    r.extrapolated_15mm_s = r.tiles_15mm * r.per_tile_s;
    return r;
}

std::string report_text(const ScanReport& r) {
    char buf[512];
    std::ostringstream os;
    std::snprintf(buf, sizeof buf, "tiles           %d (%s)\n", r.tiles, r.pipelined ? "pipelined" : "sequential");
    os << buf;
    std::snprintf(buf, sizeof buf, "wall time       %.3f s\n", r.wall_s);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "per tile mean   move %.3f s, af %.4f s, settle %.3f s, capture %.3f s, correct %.4f s\n",
                  r.mean.move_s, r.mean.af_compute_s, r.mean.settle_s, r.mean.capture_s, r.mean.correct_s);
    os << buf;
    std::snprintf(buf, sizeof buf, "per tile path   %.3f s\n", r.per_tile_s);
    os << buf;
    std::snprintf(buf, sizeof buf, "15 x 15 mm      %d tiles, %.1f s (reference %.0f s)\n", r.tiles_15mm,
                  r.extrapolated_15mm_s, r.reference_15mm_s);
    os << buf;
    return os.str();
}

namespace {

nlohmann::ordered_json timing_json(const TileTiming& t) {
    nlohmann::ordered_json j;
    j["move_s"] = detail::round9(t.move_s);
    j["af_compute_s"] = detail::round9(t.af_compute_s);
    j["settle_s"] = detail::round9(t.settle_s);
    j["capture_s"] = detail::round9(t.capture_s);
    j["correct_s"] = detail::round9(t.correct_s);
    return j;
}

} // namespace

std::string report_json(const ScanReport& r, const FocusMap& map) {
    nlohmann::ordered_json j;
    j["tiles"] = r.tiles;
    j["pipelined"] = r.pipelined;
    j["wall_s"] = detail::round9(r.wall_s);
    j["mean"] = timing_json(r.mean);
    j["per_tile_s"] = detail::round9(r.per_tile_s);
    j["extrapolation_15mm"] = {{"tiles", r.tiles_15mm},
                               {"seconds", detail::round9(r.extrapolated_15mm_s)},
                               {"reference_seconds", r.reference_15mm_s}};
    auto per = nlohmann::ordered_json::array();
    for (const FocusEntry& e : map) {
        nlohmann::ordered_json t;
        t["index"] = e.pose.index;
        t["col"] = e.pose.col;
        t["row"] = e.pose.row;
        t.update(timing_json(e.timing));
        per.push_back(t);
    }
    j["per_tile"] = per;
    return j.dump(2) + "\n";
}

std::string focus_map_csv(const FocusMap& map) {
    std::ostringstream os;
    os << "tile_index,col,row,stage_x_mm,stage_y_mm,separation_px,defocus_um,ring_steps_after,flags\n";
    char buf[256];
    for (const FocusEntry& e : map) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.4f,%.4f,%.4f,%.4f,%d,%s\n", e.pose.index, e.pose.col, e.pose.row,
                      e.pose.x_mm, e.pose.y_mm, e.separation_px, e.defocus_um, e.ring_steps_after,
                      e.flags().c_str());
        os << buf;
    }
    return os.str();
}

void write_focus_map(const FocusMap& map, const std::filesystem::path& path) {
    detail::write_text_atomic(path, focus_map_csv(map));
}

std::string scan_manifest_json(const ScanPlan& plan, const OpticsConfig& optics) {
    nlohmann::ordered_json j;
    j["object_pixel_um"] = detail::round9(optics.object_pixel_um());
    j["tile_width_px"] = optics.sensor_width;
    j["tile_height_px"] = optics.sensor_height;
    j["overlap"] = plan.overlap;
    j["cols"] = plan.cols;
    j["rows"] = plan.rows;
    auto tiles = nlohmann::ordered_json::array();
    for (const TilePose& t : plan.tiles)
        tiles.push_back({{"index", t.index},
                         {"col", t.col},
                         {"row", t.row},
                         {"x_mm", detail::round9(t.x_mm)},
                         {"y_mm", detail::round9(t.y_mm)},
                         {"file", DirectorySink::tile_name(t.col, t.row)}});
    j["tiles"] = tiles;
    return j.dump(2) + "\n";
}

} // namespace wsi

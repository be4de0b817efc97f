#include <chrono>
#include <cmath>
#include <thread>

#include "wsi/bounded_queue.hpp"
#include "wsi/errors.hpp"
#include "wsi/scanner.hpp"

namespace wsi {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

int tiles_along(double extent_mm, double fov_mm, double pitch_mm) {
    if (extent_mm <= fov_mm + 1e-9)
        return 1;
    return 1 + static_cast<int>(std::ceil((extent_mm - fov_mm) / pitch_mm - 1e-9));
}

ScanPlan plan_scan(const Bounds& bounds, const OpticsConfig& optics, double overlap) {
    if (!(bounds.width_mm > 0.0) || !(bounds.height_mm > 0.0))
        throw PreconditionError("scan bounds must be positive");
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw PreconditionError("tile overlap must lie in [0, 1)");
    optics.validate();
    ScanPlan p;
    p.bounds = bounds;
    p.overlap = overlap;
    p.fov_width_mm = optics.fov_width_mm();
    p.fov_height_mm = optics.fov_height_mm();
    p.pitch_x_mm = p.fov_width_mm * (1.0 - overlap);
    p.pitch_y_mm = p.fov_height_mm * (1.0 - overlap);
    p.cols = tiles_along(bounds.width_mm, p.fov_width_mm, p.pitch_x_mm);
    p.rows = tiles_along(bounds.height_mm, p.fov_height_mm, p.pitch_y_mm);
    // The tile grid is centred on the bounds; any overhang splits evenly.
    const double span_x = p.fov_width_mm + (p.cols - 1) * p.pitch_x_mm;
    const double span_y = p.fov_height_mm + (p.rows - 1) * p.pitch_y_mm;
    const double x0 = bounds.x_mm + (bounds.width_mm - span_x) / 2.0 + p.fov_width_mm / 2.0;
    const double y0 = bounds.y_mm + (bounds.height_mm - span_y) / 2.0 + p.fov_height_mm / 2.0;
    for (int c = 0; c < p.cols; ++c)
        for (int k = 0; k < p.rows; ++k) {
            const int r = c % 2 == 0 ? k : p.rows - 1 - k;
            p.tiles.push_back({static_cast<int>(p.tiles.size()), c, r, x0 + c * p.pitch_x_mm, y0 + r * p.pitch_y_mm});
        }
    return p;
}

void ScanConfig::validate() const {
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw PreconditionError("tile overlap must lie in [0, 1)");
    if (!(stage_velocity_mm_s > 0.0))
        throw PreconditionError("stage velocity must be positive");
    if (!(exposure_s >= 0.0) || !(readout_s >= 0.0))
        throw PreconditionError("exposure and readout must be non-negative");
    if (ring_limit_steps < 0)
        throw PreconditionError("ring limit must be non-negative");
    if (workers < 1)
        throw PreconditionError("at least one correction worker is required");
}

std::string FocusEntry::flags() const {
    std::string f;
    if (low_confidence)
        f += "low_confidence";
    if (clamped)
        f += f.empty() ? "clamped" : "|clamped";
    return f;
}

std::pair<Image, FocusEntry> acquire_tile(DeviceClient& dev, const TilePose& pose, const TileContext& ctx,
                                          const ScanConfig& cfg, const AfConfig& af, const CalibrationModel& cal) {
    FocusEntry e;
    e.pose = pose;
    const bool y_move = ctx.previous && ctx.previous->col == pose.col && ctx.previous->row != pose.row;
    const DeviceStatus before = dev.status();
    const double travel = std::max(std::abs(pose.x_mm - before.x_mm), std::abs(pose.y_mm - before.y_mm));
    const double move_time = travel / cfg.stage_velocity_mm_s;

    if (cfg.autofocus)
        dev.set_led(LedMode::rg_dual);
    dev.move_to(pose.x_mm, pose.y_mm);
    Image af_frame;
    if (cfg.autofocus && y_move) {
        // Expose across the end of the y move so the frame shows this tile
        // (with motion blur) rather than the previous one.
        const double wait = std::max(0.0, move_time - cfg.exposure_s / 2.0);
        dev.dwell(wait);
        e.timing.move_s = wait;
        af_frame = dev.capture();
        e.timing.capture_s += cfg.exposure_s + cfg.readout_s;
        dev.wait_idle();
    } else {
        dev.dwell(move_time);
        e.timing.move_s = move_time;
        dev.wait_idle();
        if (cfg.autofocus) {
            af_frame = dev.capture();
            e.timing.capture_s += cfg.exposure_s + cfg.readout_s;
        }
    }

    if (cfg.autofocus) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            DefocusEstimate est = estimate_separation(af_frame, af);
            e.separation_px = est.separation_px;
            e.defocus_um = defocus_from_separation(est.separation_px, cal);
            const RingCorrection rc = ring_correction(e.defocus_um, cal, dev.ring_position(), cfg.ring_limit_steps);
            e.clamped = rc.clamped;
            e.timing.af_compute_s = seconds_since(t0);
            if (rc.steps != 0)
                dev.ring_move(rc.steps);
        } catch (const LowConfidenceError&) {
            e.low_confidence = true;
            e.timing.af_compute_s = seconds_since(t0);
        } catch (const DegenerateInputError&) {
            e.low_confidence = true;
            e.timing.af_compute_s = seconds_since(t0);
        }
        af_frame = Image();
    }
    e.ring_steps_after = dev.ring_position();

    const double settle = cfg.effective_settle_s();
    if (settle > 0.0)
        dev.dwell(settle);
    e.timing.settle_s = settle;
    dev.set_led(LedMode::brightfield);
    Image frame = dev.capture();
    e.timing.capture_s += cfg.exposure_s + cfg.readout_s;
    return {std::move(frame), e};
}

ScanResult run_scan(DeviceClient& dev, const ScanPlan& plan, const ScanConfig& cfg, const AfConfig& af,
                    const CalibrationModel& cal, const DistortionModel& distortion, TileSink& sink,
                    const OpticsConfig& optics) {
    cfg.validate();
    if (cfg.autofocus) {
        af.validate();
        if (!cal.has_ring() || !cal.has_separation())
            throw CalibrationError("autofocus scan needs ring and separation calibration");
    }
    const auto t_start = std::chrono::steady_clock::now();
    ScanResult result;
    result.focus_map.reserve(plan.tiles.size());
    std::mutex map_mu;

    struct Job {
        std::size_t slot;
        TilePose pose;
        Image frame;
    };
    std::string sink_error;
    auto process = [&](Job& job, Image& buffer) {
        const auto t0 = std::chrono::steady_clock::now();
        correct(job.frame, distortion, buffer);
        try {
            sink.write(job.pose, buffer);
        } catch (const std::exception& ex) {
            std::lock_guard lock(map_mu);
            if (sink_error.empty())
                sink_error = ex.what();
        }
        const double dt = seconds_since(t0);
        std::lock_guard lock(map_mu);
        result.focus_map[job.slot].timing.correct_s = dt;
    };

    BoundedQueue<Job> queue(cfg.queue_capacity);
    std::vector<std::thread> workers;
    if (cfg.pipelined)
        for (int i = 0; i < cfg.workers; ++i)
            workers.emplace_back([&] {
                Image buffer;
                while (auto job = queue.pop())
                    process(*job, buffer);
            });

    TileContext ctx;
    Image inline_buffer;
    try {
        for (const TilePose& pose : plan.tiles) {
            auto [frame, entry] = acquire_tile(dev, pose, ctx, cfg, af, cal);
            std::size_t slot;
            {
                std::lock_guard lock(map_mu);
                slot = result.focus_map.size();
                result.focus_map.push_back(entry);
            }
            Job job{slot, pose, std::move(frame)};
            if (cfg.pipelined)
                queue.push(std::move(job));
            else
                process(job, inline_buffer);
            ctx.previous_index = pose.index;
            ctx.previous = pose;
        }
        result.completed = true;
    } catch (const DeviceError& ex) {
        result.error = ex.what();
    }
    queue.close();
    for (auto& t : workers)
        t.join();
    if (!sink_error.empty() && result.error.empty()) {
        result.completed = false;
        result.error = "tile output failed: " + sink_error;
    }
    result.report = summarize(result.focus_map, cfg, optics, seconds_since(t_start));
    return result;
}

} // namespace wsi

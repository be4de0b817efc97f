// wsi: command-line front end for the scanner stack.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "wsi/autofocus.hpp"
#include "wsi/calibrate.hpp"
#include "wsi/config.hpp"
#include "wsi/device.hpp"
#include "wsi/distortion.hpp"
#include "wsi/mosaic.hpp"
#include "wsi/raster_io.hpp"
#include "wsi/scanner.hpp"
#include "wsi/sim_device.hpp"

namespace fs = std::filesystem;
using namespace wsi;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, device_error = 3, quality_gate = 4 };

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        f << text;
        if (!f)
            throw Error("cannot write " + path.string());
    }
    fs::rename(tmp, path);
}

// Optics for a command: file if given, else defaults; the simulator gets a
// small sensor unless one is requested so sweeps finish in seconds.
OpticsConfig resolve_optics(const std::string& optics_path, const std::string& sensor, bool sim) {
    OpticsConfig o = optics_path.empty() ? OpticsConfig{} : load_optics(optics_path);
    if (!sensor.empty()) {
        const auto [w, h] = parse_sensor(sensor);
        o.sensor_width = w;
        o.sensor_height = h;
    } else if (sim && optics_path.empty()) {
        o.sensor_width = 640;
        o.sensor_height = 480;
    }
    return o;
}

struct Backend {
    std::unique_ptr<SimMicroscope> scope;
    std::unique_ptr<DeviceClient> dev;
};

Backend open_backend(const std::string& address, const std::string& specimen_dir, const OpticsConfig& optics,
                     const SimConfig& sim, std::uint64_t seed, bool realtime) {
    Backend b;
    if (address == "sim") {
        Specimen spec;
        if (!specimen_dir.empty()) {
            if (!fs::exists(fs::path(specimen_dir) / "specimen.json"))
                throw ConfigError("specimen not found: " + specimen_dir);
            spec = load_specimen(specimen_dir);
        } else {
            SpecimenParams p;
            p.seed = seed;
            spec = make_specimen(p);
        }
        b.scope = std::make_unique<SimMicroscope>(std::move(spec), optics, sim, seed, realtime);
        b.dev = std::make_unique<DeviceClient>(std::make_unique<LoopbackTransport>(*b.scope));
    } else if (address.starts_with("tcp:") || address.starts_with("serial:")) {
        b.dev = std::make_unique<DeviceClient>(open_transport(address));
    } else {
        throw ConfigError("backend must be sim, tcp:<host>:<port> or serial:<path>:<baud>");
    }
    return b;
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config_error;
    } catch (const DeviceError& e) {
        std::cerr << "device error: " << e.what() << "\n";
        return device_error;
    } catch (const CalibrationError& e) {
        std::cerr << "calibration rejected: " << e.what() << "\n";
        return quality_gate;
    } catch (const FitRejectedError& e) {
        std::cerr << "fit rejected: " << e.what() << "\n";
        return quality_gate;
    } catch (const DetectionError& e) {
        std::cerr << "detection failed: " << e.what() << "\n";
        return quality_gate;
    } catch (const DecodeError& e) {
        std::cerr << "unreadable input: " << e.what() << "\n";
        return config_error;
    } catch (const PreconditionError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return failure;
    }
}

// ---- make-specimen ----------------------------------------------------------

struct SpecimenArgs {
    std::string size = "1";
    double pixel_um = 0.24;
    double amplitude_um = 10.0;
    std::uint64_t seed = 1;
    std::string kind = "tissue";
    std::string out;
};

int cmd_make_specimen(const SpecimenArgs& a) {
    SpecimenParams p;
    double w = 0, h = 0;
    int n = 0;
    if (std::sscanf(a.size.c_str(), "%lfx%lf%n", &w, &h, &n) == 2 && static_cast<std::size_t>(n) == a.size.size()) {
        p.width_mm = w;
        p.height_mm = h;
    } else {
        try {
            p.width_mm = p.height_mm = std::stod(a.size);
        } catch (const std::exception&) {
            throw ConfigError("--size-mm must be a number or WxH");
        }
    }
    if (!(p.width_mm > 0.0) || !(p.height_mm > 0.0) || p.width_mm > 30.0 || p.height_mm > 30.0)
        throw ConfigError("--size-mm must lie in (0, 30]");
    if (a.amplitude_um < 0.0)
        throw ConfigError("--focal-amplitude-um must be non-negative");
    p.pixel_um = a.pixel_um;
    p.focal_amplitude_um = a.amplitude_um;
    p.seed = a.seed;
    if (a.kind == "tissue")
        p.kind = SpecimenKind::tissue;
    else if (a.kind == "blank")
        p.kind = SpecimenKind::blank;
    else if (a.kind == "hole_mask")
        p.kind = SpecimenKind::hole_mask;
    else
        throw ConfigError("--kind must be tissue, blank or hole_mask");
    const Specimen spec = make_specimen(p);
    save_specimen(spec, a.out);
    std::printf("specimen %s: %d x %d px at %.3f um, focal amplitude %.2f um\n", a.out.c_str(),
                spec.texture.width(), spec.texture.height(), spec.texture_pitch_um, spec.focal_surface.amplitude_um);
    return ok;
}

// ---- calibrate ----------------------------------------------------------------

struct CalibrateArgs {
    std::string which;
    std::string backend = "sim";
    std::string specimen;
    std::string optics;
    std::string sensor;
    std::string from;
    std::string out = "calibration.json";
    std::uint64_t seed = 1;
    bool dry_run = false;
    bool json = false;
};

int cmd_calibrate(const CalibrateArgs& a) {
    const bool sim = a.backend == "sim";
    const OpticsConfig optics = resolve_optics(a.optics, a.sensor, sim);
    CalibrationModel ring = CalibrationModel::nominal(optics);
    if (!a.from.empty())
        ring = load_calibration(a.from);

    if (a.dry_run) {
        if (a.which == "ring")
            std::cout << describe_ring_sweep({});
        else
            std::cout << describe_separation_sweep({}, ring);
        return ok;
    }

    Backend b = open_backend(a.backend, a.specimen, optics, SimConfig{}, a.seed, false);
    const auto t0 = std::chrono::steady_clock::now();
    CalibrationModel model;
    std::size_t points = 0;
    if (a.which == "ring") {
        const RingCalibration rc = calibrate_ring(*b.dev, optics);
        model = rc.model;
        points = rc.points.size();
    } else {
        const SeparationCalibration sc = calibrate_separation(*b.dev, ring, AfConfig{});
        model = sc.model;
        points = sc.points.size();
    }
    save_calibration(model, a.out);
    if (a.json) {
        std::cout << calibration_to_json(model);
    } else {
        std::printf("%s calibration from %zu points in %.1f s -> %s\n", a.which.c_str(), points, seconds_since(t0),
                    a.out.c_str());
        std::printf("  object_um_per_step   %.5f\n  image_um_per_step    %.4f\n", model.object_um_per_step,
                    model.image_um_per_step);
        if (model.has_separation())
            std::printf("  sep_slope_px_per_um  %.4f\n  sep_offset_px        %.4f\n", model.sep_slope_px_per_um,
                        model.sep_offset_px);
        std::printf("  residual rms         %.4f\n", model.fit_residual_rms);
    }
    return ok;
}

// ---- scan -------------------------------------------------------------------

struct ScanArgs {
    std::string config;
    std::string output;
    std::optional<std::uint64_t> seed;
    std::optional<double> settle_s;
    bool no_autofocus = false;
    bool sequential = false;
    bool no_pad = false;
    bool realtime = false;
    bool json = false;
};

int cmd_scan(const ScanArgs& a) {
    RunConfig rc = load_run_config(a.config);
    if (!a.output.empty())
        rc.output = a.output;
    if (a.seed)
        rc.seed = *a.seed;
    if (a.settle_s)
        rc.settle_s = a.settle_s;
    if (a.no_autofocus)
        rc.autofocus = false;
    if (a.sequential)
        rc.pipelined = false;
    if (a.no_pad)
        rc.isolation_pad = false;
    if (a.realtime)
        rc.realtime = true;
    rc.validate();

    const bool sim = rc.backend == "sim";
    const OpticsConfig optics = resolve_optics(rc.optics ? rc.optics->string() : "", "", sim);
    SimConfig simcfg = rc.sim.value_or(SimConfig{});
    simcfg.isolation_pad = rc.isolation_pad;

    const CalibrationModel cal =
        rc.calibration ? load_calibration(*rc.calibration) : CalibrationModel::nominal(optics);
    if (!rc.calibration && rc.autofocus)
        std::cerr << "note: no calibration file, using the nominal model\n";
    const DistortionModel distortion = rc.distortion ? load_distortion(*rc.distortion)
                                                     : DistortionModel::identity(optics.sensor_width,
                                                                                 optics.sensor_height);

    ScanConfig cfg;
    cfg.overlap = rc.overlap;
    cfg.isolation_pad = rc.isolation_pad;
    cfg.settle_s = rc.settle_s.value_or(-1.0);
    cfg.autofocus = rc.autofocus;
    cfg.pipelined = rc.pipelined;
    if (sim) {
        cfg.stage_velocity_mm_s = simcfg.stage_velocity_mm_s;
        cfg.exposure_s = simcfg.exposure_s;
        cfg.readout_s = simcfg.readout_s;
        cfg.ring_limit_steps = simcfg.ring_limit_steps;
    }
    cfg.validate();

    const ScanPlan plan = plan_scan(rc.bounds, optics, rc.overlap);
    Backend b = open_backend(rc.backend, rc.specimen ? rc.specimen->string() : "", optics, simcfg, rc.seed,
                             rc.realtime);
    DirectorySink sink(rc.output);
    write_text(rc.output / "scan.json", scan_manifest_json(plan, optics));
    write_text(rc.output / "run.json", run_config_to_json(rc));

    AfConfig af;
    af.rng_seed = rc.seed;
    const ScanResult res = run_scan(*b.dev, plan, cfg, af, cal, distortion, sink, optics);
    write_focus_map(res.focus_map, rc.output / "focusmap.csv");
    write_text(rc.output / "report.txt", report_text(res.report));
    write_text(rc.output / "report.json", report_json(res.report, res.focus_map));
    std::cout << (a.json ? report_json(res.report, res.focus_map) : report_text(res.report));
    if (!res.completed) {
        std::cerr << "device error: " << res.error << " (" << res.focus_map.size() << " of " << plan.tiles.size()
                  << " tiles kept)\n";
        return device_error;
    }
    return ok;
}

// ---- stitch -----------------------------------------------------------------

struct StitchArgs {
    std::string dir;
    std::string out = "mosaic.png";
    bool no_refine = false;
    double max_canvas_mp = 64.0;
    bool json = false;
};

int cmd_stitch(const StitchArgs& a) {
    if (!fs::exists(fs::path(a.dir) / "scan.json"))
        throw ConfigError("no scan.json in " + a.dir);
    const std::vector<MosaicTile> tiles = load_scan_tiles(a.dir);
    if (tiles.empty())
        throw ConfigError("no tiles found in " + a.dir);
    const auto placed = a.no_refine ? nominal_placement(tiles) : refine_offsets(tiles);
    const fs::path out(a.out);
    const fs::path layout = out.parent_path() / "layout.json";
    BlendOptions bo;
    bo.max_canvas_pixels = static_cast<std::size_t>(a.max_canvas_mp * 1024.0 * 1024.0);
    try {
        const Mosaic m = blend(tiles, placed, bo);
        write_raster(m.image, out, 8);
        write_text(layout, layout_json(placed, &m));
        if (a.json)
            std::cout << layout_json(placed, &m);
        else
            std::printf("mosaic %s: %d x %d from %zu tiles\n", out.c_str(), m.image.width(), m.image.height(),
                        tiles.size());
    } catch (const CanvasTooLargeError& e) {
        const fs::path dir = out.parent_path() / (out.stem().string() + "_tiles");
        write_tiled_layout(tiles, placed, dir);
        std::cerr << e.what() << "; wrote tiled output to " << dir.string() << "\n";
        if (a.json)
            std::cout << layout_json(placed);
        return ok;
    }
    return ok;
}

// ---- measure-distortion ----------------------------------------------------

struct DistortionArgs {
    std::string mask;
    std::string out = "distortion.json";
    std::optional<double> pitch_px;
    double max_rms_px = 1.0;
    bool json = false;
};

int cmd_measure_distortion(const DistortionArgs& a) {
    if (!fs::exists(a.mask))
        throw ConfigError("mask image not found: " + a.mask);
    const Image mask = read_raster(a.mask);
    const GridDetection det = detect_grid(mask);
    FitOptions fo;
    fo.ideal_pitch_px = a.pitch_px;
    fo.max_residual_rms_px = a.max_rms_px;
    const DistortionModel model = fit_distortion(det, fo);
    save_distortion(model, a.out);
    if (a.json) {
        std::cout << distortion_to_json(model);
    } else {
        std::printf("%zu of %d dots, pitch %.2f px\n", det.centroids.size(), det.expected_points, det.pitch_px);
        std::printf("center (%.2f, %.2f) k1 %.4g k2 %.4g scale %.6f rms %.4f px -> %s\n", model.center_x,
                    model.center_y, model.k1, model.k2, model.scale, model.residual_rms_px, a.out.c_str());
    }
    return ok;
}

struct GridArgs {
    std::string sensor = "3300x3300";
    double pitch_px = 300.0;
    double radius_px = 20.0;
    double k1 = 5e-9;
    double k2 = 0.0;
    std::string out = "grid.png";
};

int cmd_make_grid(const GridArgs& a) {
    DotGridSpec s;
    std::tie(s.width, s.height) = parse_sensor(a.sensor);
    s.pitch_px = a.pitch_px;
    s.radius_px = a.radius_px;
    s.k1 = a.k1;
    s.k2 = a.k2;
    if (!(s.pitch_px > 4.0 * s.radius_px) || !(s.radius_px > 1.0))
        throw ConfigError("pitch must exceed four dot radii and the radius one pixel");
    write_raster(synthetic_dot_grid(s), a.out, 16);
    return ok;
}

// ---- bench autofocus --------------------------------------------------------

struct BenchArgs {
    int count = 50;
    std::string sensor = "640x480";
    double range_um = 15.0;
    std::uint64_t seed = 1;
    bool json = false;
};

int cmd_bench_autofocus(const BenchArgs& a) {
    if (a.count < 1)
        throw ConfigError("--count must be positive");
    OpticsConfig optics;
    std::tie(optics.sensor_width, optics.sensor_height) = parse_sensor(a.sensor);
    const SimConfig sim;
    SpecimenParams sp;
    sp.seed = a.seed;
    sp.focal_amplitude_um = 0.0;
    sp.width_mm = std::max(1.0, 1.5 * optics.fov_width_mm());
    sp.height_mm = std::max(1.0, 1.5 * optics.fov_height_mm());
    const Specimen spec = make_specimen(sp);
    const CalibrationModel cal = CalibrationModel::nominal(optics);

    std::mt19937_64 rng(a.seed);
    std::uniform_real_distribution<double> defocus(-a.range_um, a.range_um);
    std::uniform_real_distribution<double> ux(optics.fov_width_mm() / 2, spec.width_mm() - optics.fov_width_mm() / 2);
    std::uniform_real_distribution<double> uy(optics.fov_height_mm() / 2,
                                              spec.height_mm() - optics.fov_height_mm() / 2);
    AfConfig af;
    double iters = 0, err = 0, total_s = 0, worst_s = 0;
    int max_iters = 0;
    for (int i = 0; i < a.count; ++i) {
        CaptureState st;
        st.stage_x_mm = ux(rng);
        st.stage_y_mm = uy(rng);
        st.led_mode = LedMode::rg_dual;
        st.noise_seed = a.seed * 1000003u + i;
        const double d = defocus(rng);
        st.stage_z_um = -d;
        const double truth = net_defocus_um(spec, st, sim);
        const Image frame = render(spec, st, optics, sim);
        const auto t0 = std::chrono::steady_clock::now();
        const DefocusEstimate est = estimate_separation(frame, af);
        const double dt = seconds_since(t0);
        total_s += dt;
        worst_s = std::max(worst_s, dt);
        iters += est.iterations;
        max_iters = std::max(max_iters, est.iterations);
        err += std::abs(defocus_from_separation(est.separation_px, cal) - truth);
    }
    const double n = a.count;
    if (a.json) {
        nlohmann::ordered_json j;
        j["estimates"] = a.count;
        j["sensor"] = a.sensor;
        j["sample_count"] = af.sample_count;
        j["mean_iterations"] = iters / n;
        j["max_iterations"] = max_iters;
        j["mean_estimate_s"] = total_s / n;
        j["max_estimate_s"] = worst_s;
        j["mean_abs_error_um"] = err / n;
        std::cout << j.dump(2) << "\n";
    } else {
        std::printf("estimates        %d (%s, %d sampled pixels)\n", a.count, a.sensor.c_str(), af.sample_count);
        std::printf("iterations       mean %.2f, max %d\n", iters / n, max_iters);
        std::printf("per estimate     mean %.4f s, max %.4f s\n", total_s / n, worst_s);
        std::printf("mean |error|     %.3f um\n", err / n);
    }
    return ok;
}

// ---- serve ------------------------------------------------------------------

struct ServeArgs {
    int port = 0;
    bool stdio = false;
    std::string specimen;
    std::string optics;
    std::string sensor;
    std::uint64_t seed = 1;
    bool realtime = false;
};

int cmd_serve(const ServeArgs& a) {
    const OpticsConfig optics = resolve_optics(a.optics, a.sensor, true);
    Backend b = open_backend("sim", a.specimen, optics, SimConfig{}, a.seed, a.realtime);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    if (a.stdio) {
        serve_stream(*b.scope, 0, 1, &g_stop);
        return ok;
    }
    serve_tcp(*b.scope, a.port, g_stop, [](int port) {
        std::printf("listening on 127.0.0.1:%d\n", port);
        std::fflush(stdout);
    });
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Slide scanner control: simulation, calibration, scanning and stitching"};
    app.require_subcommand(1);

    SpecimenArgs spec;
    auto* ms = app.add_subcommand("make-specimen", "Generate a simulated slide");
    ms->add_option("--size-mm", spec.size, "Side length, or WxH")->capture_default_str();
    ms->add_option("--pixel-um", spec.pixel_um, "Texture sampling pitch")->capture_default_str();
    ms->add_option("--focal-amplitude-um", spec.amplitude_um, "Peak focal height")->capture_default_str();
    ms->add_option("--seed", spec.seed)->capture_default_str();
    ms->add_option("--kind", spec.kind, "tissue, blank or hole_mask")->capture_default_str();
    ms->add_option("-o,--output", spec.out, "Output directory")->required();

    CalibrateArgs cal;
    auto* cc = app.add_subcommand("calibrate", "Ring or separation calibration");
    cc->add_option("which", cal.which)->required()->check(CLI::IsMember({"ring", "separation"}));
    cc->add_option("--backend", cal.backend, "sim, tcp:<host>:<port> or serial:<path>:<baud>")->capture_default_str();
    cc->add_option("--specimen", cal.specimen, "Specimen directory (sim)");
    cc->add_option("--optics", cal.optics, "Optics JSON");
    cc->add_option("--sensor", cal.sensor, "Sensor size WxH");
    cc->add_option("--from", cal.from, "Ring calibration to build the separation fit on");
    cc->add_option("--seed", cal.seed)->capture_default_str();
    cc->add_option("-o,--output", cal.out)->capture_default_str();
    cc->add_flag("--dry-run", cal.dry_run, "Print the planned sweep only");
    cc->add_flag("--json", cal.json);

    ScanArgs scan;
    auto* sc = app.add_subcommand("scan", "Acquire tiles with autofocus");
    sc->add_option("--config", scan.config, "Run config JSON")->required();
    sc->add_option("-o,--output", scan.output, "Override the output directory");
    sc->add_option("--seed", scan.seed);
    sc->add_option("--settle-s", scan.settle_s);
    sc->add_flag("--no-autofocus", scan.no_autofocus);
    sc->add_flag("--sequential", scan.sequential, "Correct each tile before moving on");
    sc->add_flag("--no-pad", scan.no_pad, "Scan without the vibration isolation pad");
    sc->add_flag("--realtime", scan.realtime, "Run the simulator on the wall clock");
    sc->add_flag("--json", scan.json);

    StitchArgs st;
    auto* stc = app.add_subcommand("stitch", "Blend a scan directory into a mosaic");
    stc->add_option("dir", st.dir)->required();
    stc->add_option("-o,--output", st.out)->capture_default_str();
    stc->add_flag("--no-refine", st.no_refine, "Place tiles at their stage positions");
    stc->add_option("--max-canvas-mp", st.max_canvas_mp, "Above this, write tiles plus layout")->capture_default_str();
    stc->add_flag("--json", st.json);

    DistortionArgs dist;
    auto* md = app.add_subcommand("measure-distortion", "Fit radial distortion to a dot-grid mask image");
    md->add_option("mask", dist.mask)->required();
    md->add_option("-o,--output", dist.out)->capture_default_str();
    md->add_option("--pitch-px", dist.pitch_px, "True grid pitch in pixels; fixes the scale");
    md->add_option("--max-rms-px", dist.max_rms_px)->capture_default_str();
    md->add_flag("--json", dist.json);

    GridArgs grid;
    auto* mg = app.add_subcommand("make-grid", "Render a synthetic distorted dot grid");
    mg->add_option("--size", grid.sensor, "WxH")->capture_default_str();
    mg->add_option("--pitch-px", grid.pitch_px)->capture_default_str();
    mg->add_option("--radius-px", grid.radius_px)->capture_default_str();
    mg->add_option("--k1", grid.k1)->capture_default_str();
    mg->add_option("--k2", grid.k2)->capture_default_str();
    mg->add_option("-o,--output", grid.out)->capture_default_str();

    BenchArgs bench;
    auto* bc = app.add_subcommand("bench", "Benchmarks");
    auto* ba = bc->add_subcommand("autofocus", "Estimator iterations, speed and error on simulated frames");
    bc->require_subcommand(1);
    ba->add_option("--count", bench.count)->capture_default_str();
    ba->add_option("--sensor", bench.sensor)->capture_default_str();
    ba->add_option("--range-um", bench.range_um)->capture_default_str();
    ba->add_option("--seed", bench.seed)->capture_default_str();
    ba->add_flag("--json", bench.json);

    ServeArgs serve;
    auto* sv = app.add_subcommand("serve", "Expose the simulator over the wire protocol");
    sv->add_option("--port", serve.port, "TCP port, 0 picks one")->capture_default_str();
    sv->add_flag("--stdio", serve.stdio, "Serve on stdin/stdout");
    sv->add_option("--specimen", serve.specimen);
    sv->add_option("--optics", serve.optics);
    sv->add_option("--sensor", serve.sensor);
    sv->add_option("--seed", serve.seed)->capture_default_str();
    sv->add_flag("--realtime", serve.realtime);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_error;
    }

    if (*ms)
        return guarded([&] { return cmd_make_specimen(spec); });
    if (*cc)
        return guarded([&] { return cmd_calibrate(cal); });
    if (*sc)
        return guarded([&] { return cmd_scan(scan); });
    if (*stc)
        return guarded([&] { return cmd_stitch(st); });
    if (*md)
        return guarded([&] { return cmd_measure_distortion(dist); });
    if (*mg)
        return guarded([&] { return cmd_make_grid(grid); });
    if (*ba)
        return guarded([&] { return cmd_bench_autofocus(bench); });
    if (*sv)
        return guarded([&] { return cmd_serve(serve); });
    return failure;
}

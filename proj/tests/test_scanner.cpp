#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "support.hpp"
#include "wsi/bounded_queue.hpp"
#include "wsi/calibrate.hpp"
#include "wsi/errors.hpp"
#include "wsi/scanner.hpp"
#include "wsi/sim_device.hpp"

using namespace wsi;

namespace {

const Specimen& tissue(double amplitude) {
    static std::map<double, Specimen> cache;
    auto it = cache.find(amplitude);
    if (it == cache.end()) {
        SpecimenParams p;
        p.width_mm = p.height_mm = 0.6;
        p.seed = 5;
        p.focal_amplitude_um = amplitude;
        it = cache.emplace(amplitude, make_specimen(p)).first;
    }
    return it->second;
}

struct Rig {
    OpticsConfig optics = test::small_optics(320, 240);
    SimConfig sim;
    SimMicroscope scope;
    DeviceClient dev;

    explicit Rig(const Specimen& spec, bool pad = true, std::uint64_t seed = 3)
        : sim(make_sim(pad)), scope(spec, optics, sim, seed), dev(std::make_unique<LoopbackTransport>(scope)) {}

    static SimConfig make_sim(bool pad) {
        SimConfig s;
        s.k1 = 0.0;
        s.isolation_pad = pad;
        return s;
    }
};

// Passes everything through until `budget` commands have been sent, then
// behaves like a dead link.
class DyingTransport : public Transport {
public:
    DyingTransport(std::unique_ptr<Transport> inner, std::size_t budget) : inner_(std::move(inner)), left_(budget) {}
    void send_line(std::string_view line) override {
        if (left_ == 0)
            throw DeviceError("link closed");
        --left_;
        inner_->send_line(line);
    }
    std::string read_line(Millis t) override { return inner_->read_line(t); }
    std::vector<std::uint8_t> read_exact(std::size_t n, Millis t) override { return inner_->read_exact(n, t); }
    void discard_input(Millis q) override { inner_->discard_input(q); }

private:
    std::unique_ptr<Transport> inner_;
    std::size_t left_;
};

} // namespace

TEST_CASE("scan planning") {
    const OpticsConfig full;
    CHECK(full.fov_width_mm() == doctest::Approx(1.31328));
    CHECK(full.fov_height_mm() == doctest::Approx(0.87552));

    SUBCASE("one field") {
        const ScanPlan p = plan_scan({3.0, 4.0, 1.0, 0.8}, full);
        REQUIRE(p.tiles.size() == 1);
        CHECK(p.tiles[0].x_mm == doctest::Approx(3.5));
        CHECK(p.tiles[0].y_mm == doctest::Approx(4.4));
    }

    SUBCASE("10 x 11 mm") {
        const ScanPlan p = plan_scan({0.0, 0.0, 10.0, 11.0}, full);
        CHECK(p.cols == 9);
        CHECK(p.rows == 15);
        CHECK(p.tiles.size() == 135);
        // The planned span covers the bounds.
        CHECK(p.fov_width_mm + (p.cols - 1) * p.pitch_x_mm >= 10.0);
        CHECK(p.fov_height_mm + (p.rows - 1) * p.pitch_y_mm >= 11.0);
        CHECK(p.fov_width_mm + (p.cols - 2) * p.pitch_x_mm < 10.0);
    }

    SUBCASE("serpentine order") {
        const ScanPlan p = plan_scan({0.0, 0.0, 3.0, 2.0}, full);
        REQUIRE(p.rows > 1);
        for (std::size_t i = 1; i < p.tiles.size(); ++i) {
            const TilePose& a = p.tiles[i - 1];
            const TilePose& b = p.tiles[i];
            CHECK(b.index == static_cast<int>(i));
            if (a.col == b.col)
                CHECK(std::abs(a.row - b.row) == 1);
            else {
                CHECK(b.col == a.col + 1);
                CHECK(b.row == a.row);
            }
        }
        CHECK(p.tiles[p.rows - 1].row == p.rows - 1);
        CHECK(p.tiles[p.rows].row == p.rows - 1);
    }

    CHECK(tiles_along(0.5, 1.0, 0.85) == 1);
    CHECK(tiles_along(1.0, 1.0, 0.85) == 1);
    CHECK(tiles_along(1.85, 1.0, 0.85) == 2);
    CHECK(tiles_along(1.86, 1.0, 0.85) == 3);
    CHECK_THROWS_AS(plan_scan({0, 0, 0, 1}, full), PreconditionError);
    CHECK_THROWS_AS(plan_scan({0, 0, 1, 1}, full, 1.0), PreconditionError);
}

TEST_CASE("bounded queue") {
    BoundedQueue<int> q(2);
    CHECK(q.push(1));
    CHECK(q.push(2));
    std::atomic<bool> pushed{false};
    std::thread producer([&] {
        q.push(3);
        pushed = true;
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    CHECK_FALSE(pushed.load());
    CHECK(q.pop() == 1);
    producer.join();
    CHECK(pushed.load());
    q.close();
    CHECK_FALSE(q.push(4));
    CHECK(q.pop() == 2);
    CHECK(q.pop() == 3);
    CHECK_FALSE(q.pop().has_value());
}

TEST_CASE("status parsing") {
    auto st = parse_status("Run,MPos:1.000,-2.500,0.125");
    REQUIRE(st);
    CHECK(st->running);
    CHECK(st->y_mm == -2.5);
    CHECK(parse_status("Idle,MPos:0,0,0"));
    CHECK_FALSE(parse_status("Idle,MPos:0,0"));
    CHECK_FALSE(parse_status("Hold,MPos:0,0,0"));
    CHECK_FALSE(parse_status("Idle,MPos:0,0,0 extra"));
}

TEST_CASE("protocol client") {
    Rig rig(tissue(0.0));

    SUBCASE("recording shows strict request/response") {
        std::vector<std::string> log;
        DeviceClient dev(std::make_unique<RecordingTransport>(std::make_unique<LoopbackTransport>(rig.scope),
                                                              [&](const std::string& s) { log.push_back(s); }));
        dev.move_to(0.3, 0.3);
        dev.ring_move(-5);
        dev.set_led(LedMode::rg_dual);
        dev.capture();
        const std::vector<std::string> want = {"> G0 X0.300 Y0.300", "< ok", "> R-5", "< ok", "> L RG", "< ok",
                                               "> C", "< IMG 320 240 3", "< [payload 460800 bytes]"};
        CHECK(log == want);
        CHECK(dev.ring_position() == -5);
    }

    SUBCASE("garbled commands are resent") {
        FaultPlan plan;
        plan.garble = {0, 2};
        auto inner = std::make_unique<FaultInjectingTransport>(std::make_unique<LoopbackTransport>(rig.scope), plan);
        auto* faults = inner.get();
        DeviceClient dev(std::move(inner), {Millis(20), Millis(50), 3});
        dev.move_to(0.2, 0.25);
        dev.ring_move(7);
        CHECK(faults->garbled() == 2);
        CHECK(dev.ring_position() == 7);
        CHECK(rig.scope.ring_steps() == 7);
        dev.wait_idle();
        CHECK(dev.status().y_mm == doctest::Approx(0.25));
    }

    SUBCASE("a lost reply to an idempotent command is retried") {
        FaultPlan plan;
        plan.drop_reply = {0, 2};
        auto inner = std::make_unique<FaultInjectingTransport>(std::make_unique<LoopbackTransport>(rig.scope), plan);
        DeviceClient dev(std::move(inner), {Millis(20), Millis(50), 3});
        dev.move_to(0.2, 0.2);
        const Image img = dev.capture();
        CHECK(img.width() == 320);
        CHECK(dev.recoveries() >= 1);
    }

    SUBCASE("a lost reply to a relative move is reported, never repeated") {
        FaultPlan plan;
        plan.drop_reply = {0};
        auto inner = std::make_unique<FaultInjectingTransport>(std::make_unique<LoopbackTransport>(rig.scope), plan);
        DeviceClient dev(std::move(inner), {Millis(20), Millis(50), 3});
        CHECK_THROWS_AS(dev.ring_move(4), TimeoutError);
        CHECK(rig.scope.ring_steps() == 4);
    }

    SUBCASE("device errors surface") {
        DeviceClient dev(std::make_unique<LoopbackTransport>(rig.scope));
        CHECK_THROWS_AS(dev.move_to(std::nullopt, std::nullopt, 5.0), DeviceError);
        CHECK_THROWS_AS(dev.move_to({}, {}), PreconditionError);
    }

    SUBCASE("random faults never deadlock") {
        FaultPlan plan;
        plan.garble_probability = 0.1;
        plan.drop_probability = 0.1;
        plan.seed = 9;
        auto inner = std::make_unique<FaultInjectingTransport>(std::make_unique<LoopbackTransport>(rig.scope), plan);
        DeviceClient dev(std::move(inner), {Millis(10), Millis(20), 6});
        int done = 0, failed = 0;
        for (int i = 0; i < 60; ++i) {
            try {
                dev.move_to(0.2 + 0.001 * i, 0.2);
                dev.status();
                ++done;
            } catch (const DeviceError&) {
                ++failed;
            }
        }
        CHECK(done + failed == 60);
        CHECK(done > 40);
    }
}

TEST_CASE("acquire_tile") {
    const CalibrationModel cal = CalibrationModel::nominal(test::small_optics());
    ScanConfig cfg;
    AfConfig af;
    const TilePose pose{0, 0, 0, 0.3, 0.3};

    SUBCASE("8 um defocus is corrected") {
        for (double z : {8.0, -8.0}) {
            Rig rig(tissue(0.0));
            rig.scope.set_stage_z_um(z);
            auto [frame, e] = acquire_tile(rig.dev, pose, {}, cfg, af, cal);
            CHECK(frame.channels() == 3);
            CHECK(std::abs(e.defocus_um + z) < 0.5);
            CHECK_FALSE(e.low_confidence);
            const auto caps = rig.scope.captures();
            REQUIRE(caps.size() == 2);
            CHECK(caps[0].state.led_mode == LedMode::rg_dual);
            CHECK(caps[1].state.led_mode == LedMode::brightfield);
            CHECK(std::abs(caps[1].true_defocus_um) <= 0.33);
            CHECK(e.ring_steps_after == rig.scope.ring_steps());
        }
    }

    SUBCASE("blank tile keeps the ring") {
        SpecimenParams p;
        p.width_mm = p.height_mm = 0.4;
        p.kind = SpecimenKind::blank;
        Rig rig(make_specimen(p));
        auto [frame, e] = acquire_tile(rig.dev, {0, 0, 0, 0.2, 0.2}, {}, cfg, af, cal);
        CHECK(e.low_confidence);
        CHECK(e.ring_steps_after == 0);
        CHECK(rig.scope.ring_steps() == 0);
        CHECK(e.flags() == "low_confidence");
    }

    SUBCASE("settle time matters without the pad") {
        // Move from a neighbouring tile so the stage has vibration to settle.
        double sharp[2];
        int k = 0;
        for (double settle : {0.05, 0.4}) {
            double sum = 0.0;
            for (std::uint64_t seed : {1, 2, 3, 4}) {
                Rig rig(tissue(0.0), false, seed);
                rig.dev.move_to(0.2, 0.3);
                rig.dev.wait_idle();
                ScanConfig c = cfg;
                c.isolation_pad = false;
                c.autofocus = false;
                c.settle_s = settle;
                auto [frame, e] =
                    acquire_tile(rig.dev, pose, {0, TilePose{0, 0, 0, 0.2, 0.3}}, c, af, cal);
                CHECK(e.timing.settle_s == settle);
                sum += brenner_sharpness(frame);
            }
            sharp[k++] = sum;
        }
        CHECK(sharp[0] < 0.9 * sharp[1]);
    }

    CHECK(cfg.effective_settle_s() == 0.2);
    cfg.isolation_pad = false;
    CHECK(cfg.effective_settle_s() == 0.4);
}

TEST_CASE("full scan") {
    const OpticsConfig optics = test::small_optics(320, 240);
    const CalibrationModel cal = CalibrationModel::nominal(optics);
    const ScanPlan plan = plan_scan({0.15, 0.15, 0.25, 0.2}, optics);
    REQUIRE(plan.tiles.size() >= 9);
    ScanConfig cfg;
    AfConfig af;

    SUBCASE("complete, continuous and in focus") {
        for (bool pipelined : {true, false}) {
            Rig rig(tissue(10.0));
            cfg.pipelined = pipelined;
            MemorySink sink;
            const ScanResult r =
                run_scan(rig.dev, plan, cfg, af, cal, DistortionModel::identity(320, 240), sink, optics);
            CHECK(r.completed);
            CHECK(r.error.empty());
            REQUIRE(r.focus_map.size() == plan.tiles.size());
            const auto tiles = sink.tiles();
            CHECK(tiles.size() == plan.tiles.size());
            for (const TilePose& t : plan.tiles)
                CHECK(tiles.count({t.col, t.row}) == 1);

            std::vector<double> residual;
            for (const CaptureRecord& c : rig.scope.captures())
                if (c.state.led_mode == LedMode::brightfield)
                    residual.push_back(std::abs(c.true_defocus_um));
            REQUIRE(residual.size() == plan.tiles.size());
            for (double d : residual)
                CHECK(d <= 1.0);

            // The ring position follows a surface that changes slowly
            // between neighbouring tiles.
            for (std::size_t i = 1; i < r.focus_map.size(); ++i) {
                const FocusEntry& a = r.focus_map[i - 1];
                const FocusEntry& b = r.focus_map[i];
                const double truth = rig.scope.specimen().focal_surface.height_um(b.pose.x_mm, b.pose.y_mm) -
                                     rig.scope.specimen().focal_surface.height_um(a.pose.x_mm, a.pose.y_mm);
                const double ring_um = (b.ring_steps_after - a.ring_steps_after) * cal.object_um_per_step;
                CHECK(std::abs(ring_um - truth) <= 1.5);
                CHECK(b.pose.index == a.pose.index + 1);
            }
            CHECK(r.report.tiles == static_cast<int>(plan.tiles.size()));
            CHECK(r.report.pipelined == pipelined);
        }
    }

    SUBCASE("a dead link mid-scan leaves a consistent partial result") {
        Rig rig(tissue(10.0));
        DeviceClient dev(std::make_unique<DyingTransport>(std::make_unique<LoopbackTransport>(rig.scope), 40));
        MemorySink sink;
        const ScanResult r = run_scan(dev, plan, cfg, af, cal, DistortionModel::identity(320, 240), sink, optics);
        CHECK_FALSE(r.completed);
        CHECK(r.error.find("link closed") != std::string::npos);
        CHECK(r.focus_map.size() < plan.tiles.size());
        CHECK(sink.tiles().size() == r.focus_map.size());
        for (std::size_t i = 0; i < r.focus_map.size(); ++i)
            CHECK(r.focus_map[i].pose.index == static_cast<int>(i));
    }

    SUBCASE("tiles on disk") {
        Rig rig(tissue(0.0));
        test::TempDir dir("scan");
        DirectorySink sink(dir.path());
        cfg.autofocus = false;
        const ScanResult r = run_scan(rig.dev, plan, cfg, af, cal, DistortionModel::identity(320, 240), sink, optics);
        CHECK(r.completed);
        for (const TilePose& t : plan.tiles)
            CHECK(std::filesystem::exists(dir / DirectorySink::tile_name(t.col, t.row)));
        for (const auto& f : std::filesystem::directory_iterator(dir.path()))
            CHECK(f.path().extension() == ".png");
    }

    SUBCASE("autofocus without calibration is refused") {
        Rig rig(tissue(0.0));
        MemorySink sink;
        CHECK_THROWS_AS(run_scan(rig.dev, plan, cfg, af, CalibrationModel{}, DistortionModel::identity(320, 240),
                                 sink, optics),
                        CalibrationError);
    }
}

TEST_CASE("report format") {
    FocusEntry e;
    e.pose = {0, 1, 2, 0.5, 0.75};
    e.separation_px = 3.25;
    e.defocus_um = 0.89;
    e.ring_steps_after = -11;
    e.clamped = true;
    e.low_confidence = true;
    e.timing = {0.1, 0.04, 0.2, 0.08, 0.12};
    const FocusMap map{e};
    CHECK(focus_map_csv(map) ==
          "tile_index,col,row,stage_x_mm,stage_y_mm,separation_px,defocus_um,ring_steps_after,flags\n"
          "0,1,2,0.5000,0.7500,3.2500,0.8900,-11,low_confidence|clamped\n");

    ScanConfig cfg;
    const ScanReport r = summarize(map, cfg, OpticsConfig{}, 1.5);
    CHECK(r.per_tile_s == doctest::Approx(0.42));
    CHECK(r.tiles_15mm == 14 * 20);
    CHECK(r.extrapolated_15mm_s == doctest::Approx(280 * 0.42));
    CHECK(report_text(r) == "tiles           1 (pipelined)\n"
                            "wall time       1.500 s\n"
                            "per tile mean   move 0.100 s, af 0.0400 s, settle 0.200 s, capture 0.080 s, "
                            "correct 0.1200 s\n"
                            "per tile path   0.420 s\n"
                            "15 x 15 mm      280 tiles, 117.6 s (reference 120 s)\n");
    cfg.pipelined = false;
    CHECK(summarize(map, cfg, OpticsConfig{}, 1.5).per_tile_s == doctest::Approx(0.54));
    CHECK(report_json(r, map).find("\"extrapolation_15mm\"") != std::string::npos);
}

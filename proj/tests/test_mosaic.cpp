#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "wsi/errors.hpp"
#include "wsi/mosaic.hpp"
#include "wsi/raster_io.hpp"
#include "wsi/sim_device.hpp"

using namespace wsi;

namespace {

MosaicTile tile_at(const Image& src, int col, int row, int x, int y, int w, int h, double nx, double ny) {
    MosaicTile t;
    t.col = col;
    t.row = row;
    t.image = crop(src, x, y, w, h);
    t.nominal_x_px = nx;
    t.nominal_y_px = ny;
    return t;
}

// 3 x 3 tiles of 120 x 90 cut from one texture with 24 px overlap; `jitter`
// perturbs the reported positions away from the true ones.
std::vector<MosaicTile> grid_tiles(const Image& src, double jitter, std::vector<std::pair<int, int>>* truth = nullptr) {
    std::vector<MosaicTile> tiles;
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(-jitter, jitter);
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 3; ++r) {
            const int x = 10 + c * 96, y = 10 + r * 66;
            tiles.push_back(tile_at(src, c, r, x, y, 120, 90, x + u(rng), y + u(rng)));
            if (truth)
                truth->emplace_back(x, y);
        }
    return tiles;
}

double frame_min(const Image& img) { return *std::min_element(img.data().begin(), img.data().end()); }
double frame_max(const Image& img) { return *std::max_element(img.data().begin(), img.data().end()); }

} // namespace

TEST_CASE("phase correlation") {
    const Image src = test::smooth_texture(300, 200, 7, 2.0);
    const Image a = crop(src, 50, 40, 128, 96);
    const PairShift same = phase_correlate(a, a);
    CHECK(std::abs(same.dx) < 1e-3);
    CHECK(std::abs(same.dy) < 1e-3);
    CHECK(same.confidence > 0.9);

    // b(x) = a(x + t)
    const Image b = crop(src, 55, 37, 128, 96);
    const PairShift s = phase_correlate(a, b);
    CHECK(s.dx == doctest::Approx(5.0).epsilon(0.02));
    CHECK(s.dy == doctest::Approx(-3.0).epsilon(0.03));

    const Image frac = translate(a, -2.5, 0.0);
    const PairShift f = phase_correlate(a, frac);
    CHECK(f.dx == doctest::Approx(2.5).epsilon(0.08));

    CHECK_THROWS_AS(phase_correlate(a, crop(src, 0, 0, 64, 64)), PreconditionError);
}

TEST_CASE("feathered blend") {
    SUBCASE("ramp across a constant-valued overlap") {
        const std::vector<MosaicTile> tiles{{0, 0, Image(100, 50, 1, 0.2f), 0.0, 0.0},
                                            {1, 0, Image(100, 50, 1, 0.8f), 60.0, 0.0}};
        const Mosaic m = blend(tiles, nominal_placement(tiles));
        REQUIRE(m.image.width() == 160);
        REQUIRE(m.image.height() == 50);
        for (int y : {0, 25, 49}) {
            CHECK(m.image.at(0, y) == doctest::Approx(0.2f));
            CHECK(m.image.at(59, y) == doctest::Approx(0.2f));
            CHECK(m.image.at(100, y) == doctest::Approx(0.8f));
            for (int x = 60; x < 100; ++x)
                CHECK(m.image.at(x, y) >= m.image.at(x - 1, y) - 1e-6f);
            CHECK(m.image.at(79, y) == doctest::Approx(0.5f).epsilon(0.02));
        }
    }

    SUBCASE("single tile is reproduced exactly") {
        const Image img = test::noise_image(70, 40, 3, 3);
        const std::vector<MosaicTile> tiles{{0, 0, img, 12.0, -5.0}};
        const Mosaic m = blend(tiles, nominal_placement(tiles));
        CHECK(test::max_abs_diff(m.image, img) < 1e-6);
        CHECK(m.origin_x_px == 12.0);
        CHECK(m.origin_y_px == -5.0);
    }

    SUBCASE("no overshoot") {
        const Image src = test::smooth_texture(420, 260, 8, 1.0);
        const auto tiles = grid_tiles(src, 0.0);
        auto placed = nominal_placement(tiles);
        placed[4].x_px += 0.37;
        placed[4].y_px -= 0.61;
        const Mosaic m = blend(tiles, placed);
        double lo = 1.0, hi = 0.0;
        for (const MosaicTile& t : tiles) {
            lo = std::min(lo, frame_min(t.image));
            hi = std::max(hi, frame_max(t.image));
        }
        CHECK(frame_min(m.image) >= lo - 1e-6);
        CHECK(frame_max(m.image) <= hi + 1e-6);
    }

    SUBCASE("translation equivariance") {
        const Image src = test::smooth_texture(420, 260, 9, 2.0);
        auto tiles = grid_tiles(src, 0.0);
        const auto base = refine_offsets(tiles);
        const Mosaic m0 = blend(tiles, base);
        for (MosaicTile& t : tiles) {
            t.nominal_x_px += 17.0;
            t.nominal_y_px -= 9.0;
        }
        const auto moved = refine_offsets(tiles);
        const Mosaic m1 = blend(tiles, moved);
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(moved[i].x_px - base[i].x_px == doctest::Approx(17.0).epsilon(1e-6));
            CHECK(moved[i].y_px - base[i].y_px == doctest::Approx(-9.0).epsilon(1e-6));
        }
        CHECK(m1.origin_x_px == m0.origin_x_px + 17.0);
        REQUIRE(m1.image.width() == m0.image.width());
        CHECK(test::max_abs_diff(m0.image, m1.image) < 1e-5);
    }

    SUBCASE("canvas cap") {
        const std::vector<MosaicTile> tiles{{0, 0, Image(100, 100, 1, 0.5f), 0.0, 0.0},
                                            {1, 0, Image(100, 100, 1, 0.5f), 5000.0, 0.0}};
        BlendOptions opts;
        opts.max_canvas_pixels = 100000;
        CHECK_THROWS_AS(blend(tiles, nominal_placement(tiles), opts), CanvasTooLargeError);
        const std::vector<MosaicTile> mixed{{0, 0, Image(10, 10, 1), 0.0, 0.0}, {1, 0, Image(10, 10, 3), 5.0, 0.0}};
        CHECK_THROWS_AS(blend(mixed, nominal_placement(mixed)), ChannelMismatchError);
        CHECK_THROWS_AS(blend({}, {}), PreconditionError);
    }
}

TEST_CASE("offset refinement") {
    const Image src = test::smooth_texture(420, 260, 11, 2.0);

    SUBCASE("exact nominal positions stay put") {
        const auto tiles = grid_tiles(src, 0.0);
        const auto placed = refine_offsets(tiles);
        for (std::size_t i = 0; i < tiles.size(); ++i) {
            CHECK(std::abs(placed[i].x_px - tiles[i].nominal_x_px) <= 0.5);
            CHECK(std::abs(placed[i].y_px - tiles[i].nominal_y_px) <= 0.5);
            CHECK(placed[i].confidence > 0.5);
        }
        const Mosaic m = blend(tiles, nominal_placement(tiles));
        CHECK(test::max_abs_diff(m.image, crop(src, 10, 10, m.image.width(), m.image.height())) < 1e-5);
    }

    SUBCASE("stage errors of +/-3 px are recovered") {
        std::vector<std::pair<int, int>> truth;
        const auto tiles = grid_tiles(src, 3.0, &truth);
        const auto placed = refine_offsets(tiles);
        // Positions are determined up to a common translation.
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < tiles.size(); ++i) {
            mx += (placed[i].x_px - truth[i].first) / tiles.size();
            my += (placed[i].y_px - truth[i].second) / tiles.size();
        }
        for (std::size_t i = 0; i < tiles.size(); ++i) {
            CHECK(std::abs(placed[i].x_px - truth[i].first - mx) <= 0.5);
            CHECK(std::abs(placed[i].y_px - truth[i].second - my) <= 0.5);
        }
        CHECK(std::abs(mx) < 3.0);
        CHECK(test::seam_misalignment(tiles, placed) < 0.5);
        CHECK(test::seam_misalignment(tiles, nominal_placement(tiles)) > 1.0);
    }

    SUBCASE("blank tiles keep nominal with zero confidence") {
        std::vector<MosaicTile> tiles = grid_tiles(src, 0.0);
        tiles[4].image = Image(120, 90, 1, 0.5f);
        tiles[4].nominal_x_px += 2.0;
        const auto placed = refine_offsets(tiles);
        CHECK(placed[4].confidence == 0.0);
        CHECK(placed[4].x_px == tiles[4].nominal_x_px);
        CHECK(placed[4].y_px == tiles[4].nominal_y_px);
        CHECK(placed[0].confidence > 0.5);
    }
}

TEST_CASE("layout files") {
    const Image src = test::smooth_texture(420, 260, 12, 2.0);
    const auto tiles = grid_tiles(src, 0.0);
    const auto placed = nominal_placement(tiles);
    const std::string j = layout_json(placed);
    CHECK(j.find("\"x_px\"") != std::string::npos);
    CHECK(j.find("\"confidence\"") != std::string::npos);

    test::TempDir dir("layout");
    write_tiled_layout(tiles, placed, dir.path());
    CHECK(std::filesystem::exists(dir / "layout.json"));
    CHECK(std::filesystem::exists(dir / "tile_2_1.png"));
}

TEST_CASE("scan directory round trip") {
    const OpticsConfig optics = test::small_optics(160, 120);
    const ScanPlan plan = plan_scan({0.0, 0.0, 0.07, 0.05}, optics);
    REQUIRE(plan.tiles.size() == 4);
    test::TempDir dir("scandir");
    DirectorySink sink(dir.path());
    const Image src = test::smooth_texture(400, 300, 13, 2.0);
    for (const TilePose& p : plan.tiles) {
        Image rgb(160, 120, 3);
        const MosaicTile t = make_mosaic_tile(p, Image(160, 120, 1), optics.object_pixel_um());
        for (int y = 0; y < 120; ++y)
            for (int x = 0; x < 160; ++x)
                for (int c = 0; c < 3; ++c)
                    rgb.at(x, y, c) = src.at(static_cast<int>(std::lround(t.nominal_x_px)) + x + 20,
                                             static_cast<int>(std::lround(t.nominal_y_px)) + y + 20);
        sink.write(p, rgb);
    }
    std::ofstream(dir / "scan.json") << scan_manifest_json(plan, optics);
    const auto tiles = load_scan_tiles(dir.path());
    REQUIRE(tiles.size() == 4);
    CHECK(tiles[0].image.channels() == 3);
    const auto placed = refine_offsets(tiles);
    for (std::size_t i = 0; i < tiles.size(); ++i)
        CHECK(std::abs(placed[i].x_px - tiles[i].nominal_x_px) < 0.6);

    std::filesystem::remove(dir / DirectorySink::tile_name(1, 1));
    CHECK(load_scan_tiles(dir.path()).size() == 3);
    std::ofstream(dir / "scan.json") << "{";
    CHECK_THROWS_AS(load_scan_tiles(dir.path()), DecodeError);
}

TEST_CASE("distortion correction improves seams") {
    // Tiles from a simulator with strong pincushion, once raw and once
    // corrected with a model fitted to a hole-array mask on the same optics.
    const OpticsConfig optics = test::small_optics(640, 480);
    SimConfig sim;
    sim.k1 = 2e-7;
    sim.read_noise_sigma = 0.002;

    SpecimenParams mp;
    mp.width_mm = mp.height_mm = 0.3;
    mp.kind = SpecimenKind::hole_mask;
    mp.focal_amplitude_um = 0.0;
    SimMicroscope mask_scope(make_specimen(mp), optics, sim, 1);
    DeviceClient mask_dev(std::make_unique<LoopbackTransport>(mask_scope));
    mask_dev.move_to(0.15, 0.15);
    mask_dev.wait_idle();
    const DistortionModel model = fit_distortion(detect_grid(mask_dev.capture()));
    CHECK(-model.k1 == doctest::Approx(2e-7).epsilon(0.05));

    SpecimenParams tp;
    tp.width_mm = tp.height_mm = 0.45;
    tp.seed = 6;
    tp.focal_amplitude_um = 0.0;
    const Specimen tissue = make_specimen(tp);
    const ScanPlan plan = plan_scan({0.07, 0.07, 0.28, 0.2}, optics);
    REQUIRE(plan.tiles.size() == 4);
    ScanConfig cfg;
    cfg.autofocus = false;

    double seam[2];
    int k = 0;
    for (const DistortionModel& m : {DistortionModel::identity(640, 480), model}) {
        SimMicroscope scope(tissue, optics, sim, 2);
        DeviceClient dev(std::make_unique<LoopbackTransport>(scope));
        MemorySink sink;
        const ScanResult r = run_scan(dev, plan, cfg, {}, {}, m, sink, optics);
        REQUIRE(r.completed);
        std::vector<MosaicTile> tiles;
        const auto frames = sink.tiles();
        for (const TilePose& p : plan.tiles)
            tiles.push_back(make_mosaic_tile(p, frames.at({p.col, p.row}), optics.object_pixel_um()));
        seam[k++] = test::seam_misalignment(tiles, refine_offsets(tiles));
    }
    MESSAGE("seam misalignment raw " << seam[0] << " px, corrected " << seam[1] << " px");
    CHECK(seam[0] > 1.0);
    CHECK(seam[1] <= seam[0] / 10.0);
}

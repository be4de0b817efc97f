#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "wsi/distortion.hpp"
#include "wsi/errors.hpp"

using namespace wsi;

namespace {

double nearest(const std::vector<Point2>& sites, Point2 p) {
    double best = 1e300;
    for (const Point2& s : sites)
        best = std::min(best, std::hypot(s.x - p.x, s.y - p.y));
    return best;
}

// Ideal 11 x 11 lattice and its images under the model's own inverse map.
GridDetection model_points(const DistortionModel& m, int n = 11, double pitch = 300.0) {
    GridDetection det;
    det.image_width = det.image_height = static_cast<int>(n * pitch);
    det.pitch_px = pitch;
    det.expected_points = n * n;
    const int h = n / 2;
    for (int r = -h; r <= h; ++r)
        for (int c = -h; c <= h; ++c) {
            const Point2 ideal{m.center_x + c * pitch, m.center_y + r * pitch};
            det.centroids.push_back(m.to_distorted(ideal));
            det.grid_assignment.emplace_back(r, c);
        }
    return det;
}

} // namespace

TEST_CASE("model maps") {
    DistortionModel m{1000.0, 700.0, -4e-9, 1e-16, 1.01, 0.0};
    for (Point2 p : {Point2{0, 0}, Point2{1999, 1399}, Point2{1000, 700}, Point2{1500.5, 20.25}}) {
        const Point2 back = m.to_distorted(m.to_ideal(p));
        CHECK(back.x == doctest::Approx(p.x).epsilon(1e-9));
        CHECK(back.y == doctest::Approx(p.y).epsilon(1e-9));
    }
    // The centre is a fixed point.
    const Point2 c = m.to_ideal({1000.0, 700.0});
    CHECK(c.x == 1000.0);
    CHECK(c.y == 700.0);

    const DistortionModel id = DistortionModel::identity(640, 480);
    CHECK(id.is_identity());
    CHECK(id.center_x == 319.5);
    CHECK(id.center_y == 239.5);
    CHECK(m.invertible_over(2000, 1400));
    CHECK_FALSE(DistortionModel{0, 0, -1e-4, 0, 1, 0}.invertible_over(2000, 1400));
}

TEST_CASE("grid detection") {
    DotGridSpec spec;
    const std::vector<Point2> truth = dot_grid_sites(spec);
    CHECK(truth.size() == 121);

    SUBCASE("undistorted grid: centroids within 0.1 px") {
        const GridDetection det = detect_grid(synthetic_dot_grid(spec));
        REQUIRE(det.centroids.size() == 121);
        CHECK(det.expected_points == 121);
        CHECK(det.pitch_px == doctest::Approx(300.0).epsilon(1e-3));
        for (const Point2& p : det.centroids)
            CHECK(nearest(truth, p) <= 0.1);
        // Assignment is relative to the dot nearest the centre.
        for (std::size_t i = 0; i < det.centroids.size(); ++i) {
            CHECK(det.centroids[i].x == doctest::Approx(1649.5 + 300.0 * det.grid_assignment[i].second).epsilon(1e-4));
            CHECK(det.centroids[i].y == doctest::Approx(1649.5 + 300.0 * det.grid_assignment[i].first).epsilon(1e-4));
        }
    }

    SUBCASE("pincushion pushes the corner outward") {
        DotGridSpec warped = spec;
        warped.k1 = 5e-9;
        const GridDetection det = detect_grid(synthetic_dot_grid(warped));
        Point2 corner{};
        for (std::size_t i = 0; i < det.centroids.size(); ++i)
            if (det.grid_assignment[i] == std::pair{-5, -5})
                corner = det.centroids[i];
        const double ideal_r = std::hypot(1500.0, 1500.0);
        const double r = std::hypot(corner.x - 1649.5, corner.y - 1649.5);
        CHECK(r > ideal_r + 10.0);
        CHECK(r == doctest::Approx(ideal_r * (1 + 5e-9 * ideal_r * ideal_r)).epsilon(1e-3));
    }

    SUBCASE("dark dots on a bright field") {
        DotGridSpec inv = spec;
        inv.dot = 0.1f;
        inv.background = 0.9f;
        CHECK(detect_grid(synthetic_dot_grid(inv)).centroids.size() == 121);
    }

    CHECK_THROWS_AS(detect_grid(Image(800, 600, 1, 0.5f)), DetectionError);
    CHECK_THROWS_AS(detect_grid(test::noise_image(400, 300, 3)), DetectionError);
}

TEST_CASE("fit recovers a known model") {
    const DistortionModel truth{1649.5, 1649.5, 5e-9, 0.0, 1.0, 0.0};
    const DistortionModel fit = fit_distortion(model_points(truth));
    CHECK(fit.k1 == doctest::Approx(5e-9).epsilon(0.05));
    CHECK(std::abs(fit.k2) < 1e-16);
    CHECK(fit.residual_rms_px <= 0.1);
    CHECK(fit.center_x == doctest::Approx(1649.5).epsilon(1e-4));

    const DistortionModel off{1600.0, 1700.0, -3e-9, 0.0, 1.0, 0.0};
    const DistortionModel fit2 = fit_distortion(model_points(off));
    CHECK(fit2.k1 == doctest::Approx(-3e-9).epsilon(0.05));
    CHECK(fit2.center_x == doctest::Approx(1600.0).epsilon(1e-3));
    CHECK(fit2.center_y == doctest::Approx(1700.0).epsilon(1e-3));

    const DistortionModel flat = fit_distortion(detect_grid(synthetic_dot_grid({})), {300.0, 1.0});
    CHECK(std::abs(flat.k1) < 1e-11);
    CHECK(std::abs(flat.k2) < 1e-18);
    CHECK(flat.scale == doctest::Approx(1.0).epsilon(1e-4));

    GridDetection few = model_points(truth);
    few.centroids.resize(5);
    few.grid_assignment.resize(5);
    CHECK_THROWS_AS(fit_distortion(few), PreconditionError);

    GridDetection noisy = model_points(truth);
    for (std::size_t i = 0; i < noisy.centroids.size(); ++i)
        noisy.centroids[i].x += (i % 2 ? 3.0 : -3.0);
    CHECK_THROWS_AS(fit_distortion(noisy, {std::nullopt, 1.0}), FitRejectedError);
}

TEST_CASE("correction") {
    SUBCASE("identity model leaves the frame unchanged, repeatedly") {
        const Image img = test::noise_image(64, 48, 2, 3);
        const DistortionModel id = DistortionModel::identity(64, 48);
        const Image once = correct(img, id);
        CHECK(once == img);
        CHECK(correct(once, id) == once);
    }

    SUBCASE("remap round trip on warped grids") {
        for (double k1 : {1e-9, 5e-9, 1e-8}) {
            DotGridSpec spec;
            spec.k1 = k1;
            const Image warped = synthetic_dot_grid(spec);
            const DistortionModel m = fit_distortion(detect_grid(warped), {300.0, 1.0});
            CHECK(-m.k1 == doctest::Approx(k1).epsilon(0.05));
            const Image fixed = correct(warped, m);
            const GridDetection after = detect_grid(fixed);
            const std::vector<Point2> truth = dot_grid_sites(spec);
            double worst = 0.0;
            for (const Point2& p : after.centroids)
                worst = std::max(worst, nearest(truth, p));
            CHECK(after.centroids.size() >= 117);
            CHECK(worst <= (k1 <= 5e-9 ? 0.3 : 0.5));
        }
    }

    SUBCASE("centre pixel does not move") {
        const DistortionModel m{99.5, 74.5, -2e-6, 0.0, 1.0, 0.0};
        Image img(200, 150, 1, 0.0f);
        img.at(99, 74) = 1.0f;
        img.at(100, 75) = 0.5f;
        const Image out = correct(img, m);
        CHECK(out.at(99, 74) == doctest::Approx(1.0f).epsilon(1e-3));
        CHECK(out.at(100, 75) == doctest::Approx(0.5f).epsilon(1e-2));
    }

    SUBCASE("cached tables are shared") {
        const DistortionModel m{319.5, 239.5, -1e-7, 0.0, 1.0, 0.0};
        const auto a = cached_remap(m, 640, 480);
        const auto b = cached_remap(m, 640, 480);
        CHECK(a.get() == b.get());
        const Image img = test::noise_image(640, 480, 4, 3);
        Image out;
        a->apply(img, out);
        CHECK(out == correct(img, m));
        CHECK_THROWS_AS(a->apply(test::noise_image(320, 240, 1, 3)), PreconditionError);
    }
}

TEST_CASE("distortion persistence") {
    const DistortionModel m{2735.5, 1823.25, -4.98765e-9, 1.5e-17, 1.0001, 0.0286};
    test::TempDir dir("dist");
    save_distortion(m, dir / "d.json");
    CHECK(load_distortion(dir / "d.json") == m);
    CHECK(distortion_from_json(distortion_to_json(m)) == m);
    CHECK_THROWS_AS(distortion_from_json("{\"cx\": 1}"), DecodeError);
}

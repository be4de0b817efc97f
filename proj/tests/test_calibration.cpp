#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "support.hpp"
#include "wsi/calibrate.hpp"
#include "wsi/errors.hpp"
#include "wsi/sim_device.hpp"

using namespace wsi;

namespace {

Specimen slide(SpecimenKind kind = SpecimenKind::tissue) {
    SpecimenParams p;
    p.width_mm = p.height_mm = 0.4;
    p.focal_amplitude_um = 4.0;
    p.seed = 31;
    p.kind = kind;
    return make_specimen(p);
}

} // namespace

TEST_CASE("fit_line") {
    std::vector<std::pair<double, double>> exact;
    for (double x : {-2.0, 0.0, 1.0, 3.0, 4.5})
        exact.emplace_back(x, 2 * x + 1);
    const LineFit f = fit_line(exact);
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.residual_rms == doctest::Approx(0.0).scale(1.0));

    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<std::pair<double, double>> noisy;
    for (int i = 0; i < 50; ++i) {
        const double x = -500.0 + 1000.0 * i / 49.0;
        noisy.emplace_back(x, 0.08 * x + noise(rng));
    }
    CHECK(fit_line(noisy).slope == doctest::Approx(0.08).epsilon(0.02));

    const std::vector<std::pair<double, double>> two{{0, 0}, {1, 1}};
    CHECK_THROWS_AS(fit_line(two), PreconditionError);
    const std::vector<std::pair<double, double>> same_x{{1, 0}, {1, 1}, {1, 2}};
    CHECK_THROWS_AS(fit_line(same_x), PreconditionError);
}

TEST_CASE("nominal model") {
    const OpticsConfig o;
    const CalibrationModel m = CalibrationModel::nominal(o);
    CHECK(m.object_um_per_step == doctest::Approx(0.08));
    CHECK(m.image_um_per_step == doctest::Approx(8.0));
    CHECK(m.sep_slope_px_per_um == doctest::Approx(channel_shift_px(1.0, o)));
    CHECK(m.sep_offset_px == 0.0);
    CHECK(m.source == CalibrationSource::nominal);
    CHECK_FALSE(CalibrationModel{}.has_ring());
    CHECK_FALSE(CalibrationModel{}.has_separation());
}

TEST_CASE("calibration persistence") {
    CalibrationModel m;
    m.object_um_per_step = 0.0801234567891;
    m.image_um_per_step = 8.01234567891;
    m.sep_slope_px_per_um = 3.6412345678;
    m.sep_offset_px = -0.0123456789123;
    m.fit_residual_rms = 0.1;
    m.source = CalibrationSource::fitted;
    m.timestamp = "2026-01-02T03:04:05Z";

    test::TempDir dir("cal");
    save_calibration(m, dir / "c.json");
    const CalibrationModel once = load_calibration(dir / "c.json");
    CHECK(once.object_um_per_step == doctest::Approx(m.object_um_per_step).epsilon(1e-8));
    CHECK(once.timestamp == m.timestamp);
    CHECK(once.source == CalibrationSource::fitted);
    // Values already at 9 significant digits survive unchanged.
    save_calibration(once, dir / "d.json");
    CHECK(load_calibration(dir / "d.json") == once);
    CHECK(calibration_to_json(once) == calibration_to_json(load_calibration(dir / "d.json")));

    CHECK_THROWS_AS(calibration_from_json("{\"source\": \"guess\"}"), DecodeError);
    CHECK_THROWS_AS(calibration_from_json("not json"), DecodeError);
}

TEST_CASE("ring calibration on the simulator") {
    const OpticsConfig o = test::small_optics(320, 240);
    SimMicroscope scope(slide(), o, SimConfig{}, 7);
    DeviceClient dev(std::make_unique<LoopbackTransport>(scope));
    const RingCalibration rc = calibrate_ring(dev, o);
    CHECK(rc.model.object_um_per_step == doctest::Approx(0.08).epsilon(0.02));
    CHECK(rc.model.image_um_per_step == doctest::Approx(8.0).epsilon(0.02));
    CHECK(rc.model.source == CalibrationSource::fitted);
    CHECK(rc.points.size() == 9);
    CHECK(dev.ring_position() == 0);
    CHECK(std::abs(scope.true_defocus_um()) < 0.5);

    RingSweepOptions one;
    one.ring_positions = {0};
    CHECK_THROWS_AS(calibrate_ring(dev, o, one), CalibrationError);
}

TEST_CASE("separation calibration on the simulator") {
    const OpticsConfig o = test::small_optics(320, 240);
    SimMicroscope scope(slide(), o, SimConfig{}, 9);
    DeviceClient dev(std::make_unique<LoopbackTransport>(scope));
    const CalibrationModel ring = CalibrationModel::nominal(o);
    const SeparationCalibration sc = calibrate_separation(dev, ring, AfConfig{});
    CHECK(sc.model.sep_slope_px_per_um == doctest::Approx(channel_shift_px(1.0, o)).epsilon(0.05));
    CHECK(std::abs(sc.model.sep_offset_px) <= 0.2);
    CHECK(sc.model.fit_residual_rms <= 1.0);
    CHECK(sc.model.object_um_per_step == ring.object_um_per_step);
    CHECK(sc.points.size() == 13);
    // Separation is monotone in the true defocus over the sweep.
    for (std::size_t i = 1; i < sc.points.size(); ++i)
        CHECK(sc.points[i].second > sc.points[i - 1].second);

    CHECK_THROWS_AS(calibrate_separation(dev, CalibrationModel{}, AfConfig{}), CalibrationError);
}

TEST_CASE("a blank slide cannot be calibrated") {
    const OpticsConfig o = test::small_optics(320, 240);
    SimMicroscope scope(slide(SpecimenKind::blank), o, SimConfig{}, 9);
    DeviceClient dev(std::make_unique<LoopbackTransport>(scope));
    CHECK_THROWS_AS(calibrate_separation(dev, CalibrationModel::nominal(o), AfConfig{}), CalibrationError);
}

TEST_CASE("dry-run descriptions") {
    const std::string ring = describe_ring_sweep({});
    CHECK(ring.find("9 positions") != std::string::npos);
    CHECK(ring.find("-400") != std::string::npos);
    const std::string sep = describe_separation_sweep({}, CalibrationModel::nominal(OpticsConfig{}));
    CHECK(sep.find("-15") != std::string::npos);
    CHECK(sep.find(" 125") != std::string::npos);
    CHECK(sep.find("-188") != std::string::npos);
}

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "common/json_util.hpp"
#include "wsi/calibration.hpp"
#include "wsi/errors.hpp"

namespace wsi {

CalibrationModel CalibrationModel::nominal(const OpticsConfig& optics) {
    CalibrationModel m;
    m.object_um_per_step = 0.08;
    m.image_um_per_step = m.object_um_per_step * optics.axial_magnification();
    m.sep_slope_px_per_um = channel_shift_px(1.0, optics);
    m.sep_offset_px = 0.0;
    m.source = CalibrationSource::nominal;
    return m;
}

LineFit fit_line(std::span<const std::pair<double, double>> points) {
    if (points.size() < 3)
        throw PreconditionError("line fit needs at least 3 points, got " + std::to_string(points.size()));
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : points) {
        mx += x / n;
        my += y / n;
    }
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (!(sxx > 1e-12 * (1.0 + mx * mx) * n))
        throw PreconditionError("line fit is rank deficient (x values coincide)");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss = 0.0;
    for (const auto& [x, y] : points) {
        const double r = y - (fit.slope * x + fit.intercept);
        ss += r * r;
    }
    fit.residual_rms = std::sqrt(ss / n);
    return fit;
}

std::string calibration_to_json(const CalibrationModel& m) {
    nlohmann::ordered_json j;
    j["image_um_per_step"] = detail::round9(m.image_um_per_step);
    j["object_um_per_step"] = detail::round9(m.object_um_per_step);
    j["sep_slope_px_per_um"] = detail::round9(m.sep_slope_px_per_um);
    j["sep_offset_px"] = detail::round9(m.sep_offset_px);
    j["fit_residual_rms"] = detail::round9(m.fit_residual_rms);
    j["source"] = m.source == CalibrationSource::fitted ? "fitted" : "nominal";
    j["timestamp"] = m.timestamp;
    return j.dump(2) + "\n";
}

CalibrationModel calibration_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        CalibrationModel m;
        m.image_um_per_step = j.at("image_um_per_step").get<double>();
        m.object_um_per_step = j.at("object_um_per_step").get<double>();
        m.sep_slope_px_per_um = j.at("sep_slope_px_per_um").get<double>();
        m.sep_offset_px = j.at("sep_offset_px").get<double>();
        m.fit_residual_rms = j.value("fit_residual_rms", 0.0);
        const std::string source = j.value("source", std::string("nominal"));
        if (source != "fitted" && source != "nominal")
            throw DecodeError("calibration source must be 'fitted' or 'nominal'");
        m.source = source == "fitted" ? CalibrationSource::fitted : CalibrationSource::nominal;
        m.timestamp = j.value("timestamp", std::string());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("invalid calibration JSON: ") + e.what());
    }
}

void save_calibration(const CalibrationModel& model, const std::filesystem::path& path) {
    detail::write_text_atomic(path, calibration_to_json(model));
}

CalibrationModel load_calibration(const std::filesystem::path& path) {
    return calibration_from_json(detail::read_text(path));
}

std::string iso8601_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace wsi

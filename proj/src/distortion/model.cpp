#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "common/json_util.hpp"
#include "wsi/distortion.hpp"
#include "wsi/errors.hpp"

namespace wsi {

namespace {

// Solve rho * (1 + k1 rho^2 + k2 rho^4) = target for rho >= 0.
double solve_radial(double target, double k1, double k2, double guess) {
    double rho = guess;
    for (int i = 0; i < 20; ++i) {
        const double r2 = rho * rho;
        const double f = rho * (1.0 + k1 * r2 + k2 * r2 * r2) - target;
        const double df = 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2;
        if (!(df > 0.0))
            break;
        const double step = f / df;
        rho -= step;
        if (std::abs(step) < 1e-10)
            break;
    }
    return rho;
}

} // namespace

DistortionModel DistortionModel::identity(int width, int height) {
    DistortionModel m;
    m.center_x = (width - 1) / 2.0;
    m.center_y = (height - 1) / 2.0;
    return m;
}

Point2 DistortionModel::to_ideal(Point2 d) const {
    const double dx = d.x - center_x;
    const double dy = d.y - center_y;
    const double r2 = dx * dx + dy * dy;
    const double g = scale * (1.0 + k1 * r2 + k2 * r2 * r2);
    return {center_x + dx * g, center_y + dy * g};
}

Point2 DistortionModel::to_distorted(Point2 ideal) const {
    const double ix = ideal.x - center_x;
    const double iy = ideal.y - center_y;
    const double ri = std::hypot(ix, iy);
    if (ri == 0.0)
        return {center_x, center_y};
    const double target = ri / scale;
    const double rho = solve_radial(target, k1, k2, target);
    const double f = rho / ri;
    return {center_x + ix * f, center_y + iy * f};
}

bool DistortionModel::invertible_over(int width, int height) const {
    if (!(scale > 0.0) || !std::isfinite(k1) || !std::isfinite(k2))
        return false;
    double rmax = 0.0;
    for (double x : {0.0, width - 1.0})
        for (double y : {0.0, height - 1.0})
            rmax = std::max(rmax, std::hypot(x - center_x, y - center_y));
    // The distorted frame must fit inside the monotone range as well.
    rmax *= 1.5;
    for (int i = 0; i <= 512; ++i) {
        const double r2 = std::pow(rmax * i / 512.0, 2);
        if (!(1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2 > 0.0))
            return false;
    }
    return true;
}

Image synthetic_dot_grid(const DotGridSpec& s) {
    if (!(s.pitch_px > 2.0 * s.radius_px) || !(s.radius_px > 0.0))
        throw PreconditionError("dot grid pitch must exceed the dot diameter");
    Image img(s.width, s.height, 1, s.background);
    const double cx = (s.width - 1) / 2.0;
    const double cy = (s.height - 1) / 2.0;
    auto p = img.plane(0);
    for (int y = 0; y < s.height; ++y) {
        double rho = 0.0;
        for (int x = 0; x < s.width; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double rd = std::hypot(dx, dy);
            double f = 1.0;
            if (rd > 0.0 && (s.k1 != 0.0 || s.k2 != 0.0)) {
                rho = solve_radial(rd, s.k1, s.k2, rho > 0.0 ? rho : rd);
                f = rho / rd;
            }
            const double qx = dx * f / s.pitch_px;
            const double qy = dy * f / s.pitch_px;
            const double dist = std::hypot(qx - std::round(qx), qy - std::round(qy)) * s.pitch_px;
            const double cover = std::clamp(s.radius_px + 0.5 - dist, 0.0, 1.0);
            p[static_cast<std::size_t>(y) * s.width + x] =
                static_cast<float>(s.background + (s.dot - s.background) * cover);
        }
    }
    return img;
}

std::vector<Point2> dot_grid_sites(const DotGridSpec& s) {
    const double cx = (s.width - 1) / 2.0;
    const double cy = (s.height - 1) / 2.0;
    const int nx = static_cast<int>(std::ceil(s.width / s.pitch_px)) + 1;
    const int ny = static_cast<int>(std::ceil(s.height / s.pitch_px)) + 1;
    std::vector<Point2> out;
    for (int j = -ny; j <= ny; ++j)
        for (int i = -nx; i <= nx; ++i) {
            const double ix = i * s.pitch_px;
            const double iy = j * s.pitch_px;
            const double r2 = ix * ix + iy * iy;
            const double g = 1.0 + s.k1 * r2 + s.k2 * r2 * r2;
            const double x = cx + ix * g;
            const double y = cy + iy * g;
            if (x >= 0.0 && y >= 0.0 && x <= s.width - 1.0 && y <= s.height - 1.0)
                out.push_back({cx + ix, cy + iy});
        }
    return out;
}

std::string distortion_to_json(const DistortionModel& m) {
    nlohmann::ordered_json j;
    j["cx"] = detail::round9(m.center_x);
    j["cy"] = detail::round9(m.center_y);
    j["k1"] = detail::round9(m.k1);
    j["k2"] = detail::round9(m.k2);
    j["scale"] = detail::round9(m.scale);
    j["residual_rms_px"] = detail::round9(m.residual_rms_px);
    return j.dump(2) + "\n";
}

DistortionModel distortion_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        DistortionModel m;
        m.center_x = j.at("cx").get<double>();
        m.center_y = j.at("cy").get<double>();
        m.k1 = j.at("k1").get<double>();
        m.k2 = j.at("k2").get<double>();
        m.scale = j.value("scale", 1.0);
        m.residual_rms_px = j.value("residual_rms_px", 0.0);
        if (!(m.scale > 0.0))
            throw DecodeError("distortion scale must be positive");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("invalid distortion JSON: ") + e.what());
    }
}

void save_distortion(const DistortionModel& model, const std::filesystem::path& path) {
    detail::write_text_atomic(path, distortion_to_json(model));
}

DistortionModel load_distortion(const std::filesystem::path& path) {
    return distortion_from_json(detail::read_text(path));
}

} // namespace wsi

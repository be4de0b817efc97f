#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "wsi/errors.hpp"
#include "wsi/raster_io.hpp"
#include "wsi/simscope.hpp"

namespace wsi {

namespace {

constexpr std::size_t kMaxTexturePixels = 64u << 20;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Lattice value in [-1, 1].
double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t salt) {
    const std::uint64_t h = splitmix64(salt ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x1f123bb5ull ^
                                                         static_cast<std::uint64_t>(iy) << 32));
    return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise with smoothstep interpolation; feature size ~ spacing px.
double value_noise(double x, double y, double spacing, std::uint64_t salt) {
    const double gx = x / spacing;
    const double gy = y / spacing;
    const double fx = std::floor(gx);
    const double fy = std::floor(gy);
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iy = static_cast<std::int64_t>(fy);
    const double tx = smooth(gx - fx);
    const double ty = smooth(gy - fy);
    const double v00 = lattice(ix, iy, salt);
    const double v10 = lattice(ix + 1, iy, salt);
    const double v01 = lattice(ix, iy + 1, salt);
    const double v11 = lattice(ix + 1, iy + 1, salt);
    const double top = v00 + tx * (v10 - v00);
    const double bot = v01 + tx * (v11 - v01);
    return top + ty * (bot - top);
}

FocalSurface make_focal_surface(double amplitude_um, double width_mm, double height_mm, std::mt19937_64& rng) {
    FocalSurface fs;
    fs.amplitude_um = amplitude_um;
    if (amplitude_um <= 0.0)
        return fs;
    const double extent = std::max(width_mm, height_mm);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < 4; ++i) {
        const double wavelength = extent * (1.5 + 2.5 * uni(rng));
        const double angle = 2.0 * std::numbers::pi * uni(rng);
        FocalComponent c;
        c.amplitude_um = 1.0 / (1.0 + i);
        c.fx_per_mm = std::cos(angle) / wavelength;
        c.fy_per_mm = std::sin(angle) / wavelength;
        c.phase = 2.0 * std::numbers::pi * uni(rng);
        fs.components.push_back(c);
    }
    // Normalize so the surface spans the requested amplitude over the slide.
    double peak = 0.0;
    FocalSurface raw = fs;
    raw.amplitude_um = 1e300;
    for (int j = 0; j <= 64; ++j)
        for (int i = 0; i <= 64; ++i)
            peak = std::max(peak, std::abs(raw.height_um(width_mm * i / 64.0, height_mm * j / 64.0)));
    for (auto& c : fs.components)
        c.amplitude_um *= amplitude_um / peak;
    return fs;
}

void fill_tissue(Image& tex, std::uint64_t seed, double pixel_um) {
    const int w = tex.width();
    const int h = tex.height();
    std::vector<float> hema(tex.plane_size(), 0.0f);
    std::vector<float> eosin(tex.plane_size(), 0.0f);

    // Tissue density: lumens and gaps where neither stain is present.
    std::vector<float> density(tex.plane_size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double d = 0.6 + 0.9 * value_noise(x, y, 96.0, seed + 11) + 0.45 * value_noise(x, y, 24.0, seed + 13);
            density[static_cast<std::size_t>(y) * w + x] = static_cast<float>(smooth(std::clamp(d, 0.0, 1.0)));
        }

    // Stroma: multi-octave value noise, finest features ~2 px.
    const double spacings[] = {2.0, 4.0, 8.0, 16.0};
    const double weights[] = {0.30, 0.25, 0.20, 0.15};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double e = 0.0;
            for (int o = 0; o < 4; ++o)
                e += weights[o] * value_noise(x, y, spacings[o], seed + 101 * (o + 1));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            eosin[i] = density[i] * static_cast<float>(std::clamp(0.55 + 0.6 * e, 0.05, 1.2));
            hema[i] = 0.12f * density[i];
        }

    // Nuclei: soft-edged ellipses with chromatin texture.
    std::mt19937_64 rng(splitmix64(seed ^ 0x6e75636c6569ull));
    const double area_um2 = w * h * pixel_um * pixel_um;
    const int count = static_cast<int>(area_um2 / 250.0);
    std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h), uni(0.0, 1.0);
    for (int n = 0; n < count; ++n) {
        const double cx = ux(rng);
        const double cy = uy(rng);
        const double ra = (2.0 + 2.5 * uni(rng)) / pixel_um;
        const double rb = ra * (0.6 + 0.4 * uni(rng));
        const double th = std::numbers::pi * uni(rng);
        const double strength = 0.6 + 0.6 * uni(rng);
        const double ct = std::cos(th), st = std::sin(th);
        const int x0 = std::max(0, static_cast<int>(cx - ra - 2));
        const int x1 = std::min(w - 1, static_cast<int>(cx + ra + 2));
        const int y0 = std::max(0, static_cast<int>(cy - ra - 2));
        const int y1 = std::min(h - 1, static_cast<int>(cy + ra + 2));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double u = (dx * ct + dy * st) / ra;
                const double v = (-dx * st + dy * ct) / rb;
                const double d = std::sqrt(u * u + v * v);
                const double cover = std::clamp((1.0 - d) * rb + 0.5, 0.0, 1.0);
                if (cover <= 0.0)
                    continue;
                const double chrom =
                    (0.8 + 0.35 * value_noise(x, y, 3.0, seed + 7 + n)) * density[static_cast<std::size_t>(y) * w + x];
                float& hv = hema[static_cast<std::size_t>(y) * w + x];
                hv = static_cast<float>(std::max<double>(hv, cover * strength * chrom));
            }
    }

    // Beer-Lambert with hematoxylin / eosin optical density vectors.
    const double h_od[3] = {0.65 * 1.6, 0.70 * 1.6, 0.29 * 1.6};
    const double e_od[3] = {0.07, 0.99 * 1.1, 0.11};
    for (int c = 0; c < 3; ++c) {
        auto plane = tex.plane(c);
        for (std::size_t i = 0; i < plane.size(); ++i)
            plane[i] = static_cast<float>(std::exp(-(hema[i] * h_od[c] + eosin[i] * e_od[c])));
    }
}

void fill_holes(Image& tex, double pixel_um, double pitch_um, double diameter_um) {
    const double pitch = pitch_um / pixel_um;
    const double radius = diameter_um / pixel_um / 2.0;
    constexpr float dark = 0.05f, bright = 0.95f;
    for (int y = 0; y < tex.height(); ++y)
        for (int x = 0; x < tex.width(); ++x) {
            // Pixel centers at (i + 0.5); holes centered at (k + 0.5) * pitch.
            const double px = x + 0.5, py = y + 0.5;
            const double hx = (std::floor(px / pitch) + 0.5) * pitch;
            const double hy = (std::floor(py / pitch) + 0.5) * pitch;
            const double d = std::hypot(px - hx, py - hy);
            const double cover = std::clamp(radius - d + 0.5, 0.0, 1.0);
            const float v = dark + static_cast<float>(cover) * (bright - dark);
            for (int c = 0; c < 3; ++c)
                tex.at(x, y, c) = v;
        }
}

const char* kind_name(SpecimenKind k) {
    switch (k) {
    case SpecimenKind::tissue:
        return "tissue";
    case SpecimenKind::blank:
        return "blank";
    case SpecimenKind::hole_mask:
        return "hole_mask";
    }
    return "tissue";
}

SpecimenKind kind_from_name(const std::string& s) {
    if (s == "tissue")
        return SpecimenKind::tissue;
    if (s == "blank")
        return SpecimenKind::blank;
    if (s == "hole_mask")
        return SpecimenKind::hole_mask;
    throw DecodeError("unknown specimen kind '" + s + "'");
}

} // namespace

double FocalSurface::height_um(double x_mm, double y_mm) const {
    double z = 0.0;
    for (const auto& c : components)
        z += c.amplitude_um * std::cos(2.0 * std::numbers::pi * (c.fx_per_mm * x_mm + c.fy_per_mm * y_mm) + c.phase);
    return std::clamp(z, -amplitude_um, amplitude_um);
}

Specimen make_specimen(const SpecimenParams& p) {
    if (p.width_mm <= 0.0 || p.height_mm <= 0.0 || p.pixel_um <= 0.0)
        throw PreconditionError("specimen size and pixel pitch must be positive");
    if (p.focal_amplitude_um < 0.0)
        throw PreconditionError("focal amplitude must be non-negative");
    const int w = static_cast<int>(std::lround(p.width_mm * 1000.0 / p.pixel_um));
    const int h = static_cast<int>(std::lround(p.height_mm * 1000.0 / p.pixel_um));
    if (static_cast<std::size_t>(w) * h > kMaxTexturePixels)
        throw PreconditionError("specimen texture would exceed " + std::to_string(kMaxTexturePixels >> 20) +
                                " Mpx; use a smaller size or coarser pixel");
    Specimen spec;
    spec.texture = Image(w, h, 3);
    spec.texture.pixel_pitch_um = p.pixel_um;
    spec.texture_pitch_um = p.pixel_um;
    spec.seed = p.seed;
    spec.kind = p.kind;
    spec.hole_pitch_um = p.hole_pitch_um;
    spec.hole_diameter_um = p.hole_diameter_um;
    std::mt19937_64 rng(splitmix64(p.seed));
    spec.focal_surface = make_focal_surface(p.focal_amplitude_um, spec.width_mm(), spec.height_mm(), rng);
    switch (p.kind) {
    case SpecimenKind::tissue:
        fill_tissue(spec.texture, splitmix64(p.seed + 17), p.pixel_um);
        break;
    case SpecimenKind::blank:
        for (int c = 0; c < 3; ++c) {
            auto plane = spec.texture.plane(c);
            std::fill(plane.begin(), plane.end(), c == 1 ? 0.90f : 0.92f);
        }
        break;
    case SpecimenKind::hole_mask:
        fill_holes(spec.texture, p.pixel_um, p.hole_pitch_um, p.hole_diameter_um);
        break;
    }
    return spec;
}

void save_specimen(const Specimen& spec, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_raster(spec.texture, dir / "texture.png", 16);
    nlohmann::ordered_json j;
    j["extent_mm"] = {spec.width_mm(), spec.height_mm()};
    j["pixel_um"] = spec.texture_pitch_um;
    j["seed"] = spec.seed;
    j["kind"] = kind_name(spec.kind);
    j["hole_pitch_um"] = spec.hole_pitch_um;
    j["hole_diameter_um"] = spec.hole_diameter_um;
    auto& fs = j["focal_surface"];
    fs["amplitude_um"] = spec.focal_surface.amplitude_um;
    fs["components"] = nlohmann::json::array();
    for (const auto& c : spec.focal_surface.components)
        fs["components"].push_back(
            {{"amplitude_um", c.amplitude_um}, {"fx_per_mm", c.fx_per_mm}, {"fy_per_mm", c.fy_per_mm}, {"phase", c.phase}});
    std::ofstream out(dir / "specimen.json");
    out << j.dump(2) << "\n";
}

Specimen load_specimen(const std::filesystem::path& dir) {
    std::ifstream in(dir / "specimen.json");
    if (!in)
        throw DecodeError("missing specimen.json in " + dir.string());
    nlohmann::json j;
    try {
        in >> j;
        Specimen spec;
        spec.texture = read_raster(dir / "texture.png");
        spec.texture_pitch_um = j.at("pixel_um").get<double>();
        spec.texture.pixel_pitch_um = spec.texture_pitch_um;
        spec.seed = j.at("seed").get<std::uint64_t>();
        spec.kind = kind_from_name(j.value("kind", std::string("tissue")));
        spec.hole_pitch_um = j.value("hole_pitch_um", 12.0);
        spec.hole_diameter_um = j.value("hole_diameter_um", 4.0);
        const auto& fs = j.at("focal_surface");
        spec.focal_surface.amplitude_um = fs.at("amplitude_um").get<double>();
        for (const auto& c : fs.at("components"))
            spec.focal_surface.components.push_back({c.at("amplitude_um").get<double>(), c.at("fx_per_mm").get<double>(),
                                                     c.at("fy_per_mm").get<double>(), c.at("phase").get<double>()});
        if (spec.texture.channels() != 3)
            throw DecodeError("specimen texture must be RGB");
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("invalid specimen.json: ") + e.what());
    }
}

} // namespace wsi

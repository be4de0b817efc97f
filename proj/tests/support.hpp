#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "wsi/image.hpp"
#include "wsi/mosaic.hpp"
#include "wsi/simscope.hpp"

namespace wsi::test {

/// Fresh scratch directory under the system temp dir, removed on exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("wsi_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline OpticsConfig small_optics(int w = 640, int h = 480) {
    OpticsConfig o;
    o.sensor_width = w;
    o.sensor_height = h;
    return o;
}

inline Image noise_image(int w, int h, std::uint64_t seed, int channels = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(w, h, channels);
    for (float& v : img.data())
        v = u(rng);
    return img;
}

/// Smooth random texture: noise blurred with a Gaussian, rescaled to [0.1, 0.9].
Image smooth_texture(int w, int h, std::uint64_t seed, double sigma = 2.0);

inline double max_abs_diff(const Image& a, const Image& b, int margin = 0) {
    double m = 0.0;
    for (int c = 0; c < a.channels(); ++c)
        for (int y = margin; y < a.height() - margin; ++y)
            for (int x = margin; x < a.width() - margin; ++x)
                m = std::max(m, static_cast<double>(std::abs(a.at(x, y, c) - b.at(x, y, c))));
    return m;
}

inline Image smooth_texture(int w, int h, std::uint64_t seed, double sigma) {
    Image img = noise_image(w, h, seed);
    img = convolve_separable(img, Kernel1D::gaussian(sigma, Axis::x));
    img = convolve_separable(img, Kernel1D::gaussian(sigma, Axis::y));
    float lo = 1.0f, hi = 0.0f;
    for (float v : img.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (float& v : img.data())
        v = 0.1f + 0.8f * (v - lo) / (hi - lo);
    return img;
}

/// RMS disagreement between placed neighbours, measured by correlating
/// three windows along each seam. Translation-only placement cannot remove
/// the spread that lens distortion puts between those windows.
inline double seam_misalignment(const std::vector<MosaicTile>& tiles, const std::vector<PlacedTile>& placed) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < tiles.size(); ++i)
        for (std::size_t j = i + 1; j < tiles.size(); ++j) {
            const long ax = std::lround(placed[i].x_px), ay = std::lround(placed[i].y_px);
            const long bx = std::lround(placed[j].x_px), by = std::lround(placed[j].y_px);
            const Image& a = tiles[i].image;
            const Image& b = tiles[j].image;
            const long x0 = std::max(ax, bx), x1 = std::min(ax + a.width(), bx + b.width());
            const long y0 = std::max(ay, by), y1 = std::min(ay + a.height(), by + b.height());
            if (x1 - x0 < 16 || y1 - y0 < 16)
                continue;
            const bool vertical_seam = (y1 - y0) > (x1 - x0);
            for (int k = 0; k < 3; ++k) {
                long wx0 = x0, wx1 = x1, wy0 = y0, wy1 = y1;
                if (vertical_seam) {
                    wy0 = y0 + (y1 - y0) * k / 3;
                    wy1 = y0 + (y1 - y0) * (k + 1) / 3;
                } else {
                    wx0 = x0 + (x1 - x0) * k / 3;
                    wx1 = x0 + (x1 - x0) * (k + 1) / 3;
                }
                const int w = static_cast<int>(wx1 - wx0), h = static_cast<int>(wy1 - wy0);
                const Image wa = crop(a, static_cast<int>(wx0 - ax), static_cast<int>(wy0 - ay), w, h);
                const Image wb = crop(b, static_cast<int>(wx0 - bx), static_cast<int>(wy0 - by), w, h);
                const PairShift s = phase_correlate(wa, wb);
                // What the placement claims beyond the integer crop offset.
                const double px = (placed[j].x_px - placed[i].x_px) - static_cast<double>(bx - ax);
                const double py = (placed[j].y_px - placed[i].y_px) - static_cast<double>(by - ay);
                sum += (s.dx - px) * (s.dx - px) + (s.dy - py) * (s.dy - py);
                ++n;
            }
        }
    return n ? std::sqrt(sum / n) : 0.0;
}

} // namespace wsi::test

#include "wsi/mosaic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include <Eigen/Sparse>
#include <json.hpp>

#include "common/fft.hpp"
#include "common/json_util.hpp"
#include "wsi/errors.hpp"
#include "wsi/raster_io.hpp"

namespace wsi {

MosaicTile make_mosaic_tile(const TilePose& pose, Image image, double object_pixel_um) {
    if (!(object_pixel_um > 0.0))
        throw PreconditionError("object pixel size must be positive");
    MosaicTile t;
    t.col = pose.col;
    t.row = pose.row;
    t.nominal_x_px = pose.x_mm * 1000.0 / object_pixel_um - (image.width() - 1) / 2.0;
    t.nominal_y_px = pose.y_mm * 1000.0 / object_pixel_um - (image.height() - 1) / 2.0;
    t.image = std::move(image);
    return t;
}

namespace {

void load_window(const Image& img, float* dst, int fw, int fh) {
    const Image g = to_gray(img);
    const int w = g.width(), h = g.height();
    const auto p = g.plane(0);
    double mean = 0.0;
    for (float v : p)
        mean += v;
    mean /= static_cast<double>(p.size());
    std::fill(dst, dst + static_cast<std::size_t>(fw) * fh, 0.0f);
    for (int y = 0; y < h; ++y) {
        const double wy = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (y + 0.5) / h);
        for (int x = 0; x < w; ++x) {
            const double wx = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (x + 0.5) / w);
            dst[static_cast<std::size_t>(y) * fw + x] =
                static_cast<float>((p[static_cast<std::size_t>(y) * w + x] - mean) * wx * wy);
        }
    }
}

// Sub-pixel offset of a phase-correlation peak from its larger neighbour;
// exact for the sinc-shaped peak of a pure translation.
double peak_offset(double cm, double c0, double cp) {
    if (cp >= cm && cp > 0.0)
        return std::clamp(cp / (cp + c0), 0.0, 0.5);
    if (cm > 0.0)
        return -std::clamp(cm / (cm + c0), 0.0, 0.5);
    return 0.0;
}

} // namespace

PairShift phase_correlate(const Image& a, const Image& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw PreconditionError("phase correlation needs equally sized windows");
    const int w = a.width(), h = a.height();
    const int fw = detail::good_fft_size(w);
    const int fh = detail::good_fft_size(h);
    detail::RealFft2D fa(fw, fh), fb(fw, fh);
    load_window(a, fa.real(), fw, fh);
    load_window(b, fb.real(), fw, fh);
    fa.forward();
    fb.forward();
    fftwf_complex* sa = fa.spectrum();
    const fftwf_complex* sb = fb.spectrum();
    double energy = 0.0;
    for (std::size_t i = 0; i < fa.spectrum_size(); ++i) {
        const std::complex<float> za(sa[i][0], sa[i][1]);
        const std::complex<float> zb(sb[i][0], sb[i][1]);
        const std::complex<float> r = za * std::conj(zb);
        const float m = std::abs(r);
        energy += m;
        const std::complex<float> n = m > 1e-20f ? r / m : std::complex<float>(0.0f, 0.0f);
        sa[i][0] = n.real();
        sa[i][1] = n.imag();
    }
    PairShift out;
    if (energy <= 1e-12)
        return out;
    fa.inverse();
    const float* c = fa.real();
    const double norm = static_cast<double>(fw) * fh;
    int best = 0;
    for (int i = 1; i < fw * fh; ++i)
        if (c[i] > c[best])
            best = i;
    const int px = best % fw, py = best / fw;
    auto at = [&](int x, int y) { return c[((y + fh) % fh) * fw + (x + fw) % fw] / norm; };
    const double c0 = at(px, py);
    const double ox = peak_offset(at(px - 1, py), c0, at(px + 1, py));
    const double oy = peak_offset(at(px, py - 1), c0, at(px, py + 1));
    out.dx = (px > fw / 2 ? px - fw : px) + ox;
    out.dy = (py > fh / 2 ? py - fh : py) + oy;
    out.confidence = std::max(0.0, c0);
    return out;
}

std::vector<PlacedTile> nominal_placement(const std::vector<MosaicTile>& tiles) {
    std::vector<PlacedTile> out;
    out.reserve(tiles.size());
    for (const MosaicTile& t : tiles)
        out.push_back({t.col, t.row, t.nominal_x_px, t.nominal_y_px, t.nominal_x_px, t.nominal_y_px, 0.0});
    return out;
}

std::vector<PlacedTile> refine_offsets(const std::vector<MosaicTile>& tiles, const RefineOptions& opts) {
    std::vector<PlacedTile> placed = nominal_placement(tiles);
    const int n = static_cast<int>(tiles.size());
    if (n < 2)
        return placed;

    struct Constraint {
        int i, j;
        double dx, dy, w;
    };
    std::vector<Constraint> cons;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const MosaicTile& a = tiles[i];
            const MosaicTile& b = tiles[j];
            const long ax = std::lround(a.nominal_x_px), ay = std::lround(a.nominal_y_px);
            const long bx = std::lround(b.nominal_x_px), by = std::lround(b.nominal_y_px);
            const long x0 = std::max(ax, bx), x1 = std::min(ax + a.image.width(), bx + b.image.width());
            const long y0 = std::max(ay, by), y1 = std::min(ay + a.image.height(), by + b.image.height());
            if (x1 - x0 < opts.min_overlap_px || y1 - y0 < opts.min_overlap_px)
                continue;
            const int ow = static_cast<int>(x1 - x0), oh = static_cast<int>(y1 - y0);
            const Image wa = crop(a.image, static_cast<int>(x0 - ax), static_cast<int>(y0 - ay), ow, oh);
            const Image wb = crop(b.image, static_cast<int>(x0 - bx), static_cast<int>(y0 - by), ow, oh);
            const PairShift s = phase_correlate(wa, wb);
            if (s.confidence < opts.min_confidence)
                continue;
            cons.push_back({i, j, static_cast<double>(bx - ax) + s.dx, static_cast<double>(by - ay) + s.dy,
                            s.confidence});
            placed[i].confidence = std::max(placed[i].confidence, s.confidence);
            placed[j].confidence = std::max(placed[j].confidence, s.confidence);
        }
    }
    if (cons.empty())
        return placed;

    // Weighted least squares on p_j - p_i = m_ij with a weak pull to nominal,
    // which fixes the gauge (mean position = mean nominal) and leaves
    // unconstrained tiles at nominal.
    constexpr double prior = 1e-4;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd bx = Eigen::VectorXd::Zero(n), by = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        trip.emplace_back(i, i, prior);
        bx(i) += prior * tiles[i].nominal_x_px;
        by(i) += prior * tiles[i].nominal_y_px;
    }
    for (const Constraint& c : cons) {
        trip.emplace_back(c.i, c.i, c.w);
        trip.emplace_back(c.j, c.j, c.w);
        trip.emplace_back(c.i, c.j, -c.w);
        trip.emplace_back(c.j, c.i, -c.w);
        bx(c.j) += c.w * c.dx;
        bx(c.i) -= c.w * c.dx;
        by(c.j) += c.w * c.dy;
        by(c.i) -= c.w * c.dy;
    }
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(L);
    if (solver.info() != Eigen::Success)
        return placed;
    const Eigen::VectorXd px = solver.solve(bx);
    const Eigen::VectorXd py = solver.solve(by);
    for (int i = 0; i < n; ++i) {
        const double lim_x = opts.max_offset_fraction * tiles[i].image.width();
        const double lim_y = opts.max_offset_fraction * tiles[i].image.height();
        placed[i].x_px = std::clamp(px(i), tiles[i].nominal_x_px - lim_x, tiles[i].nominal_x_px + lim_x);
        placed[i].y_px = std::clamp(py(i), tiles[i].nominal_y_px - lim_y, tiles[i].nominal_y_px + lim_y);
    }
    return placed;
}

namespace {

struct Canvas {
    long x0, y0;
    long width, height;
};

Canvas canvas_extent(const std::vector<MosaicTile>& tiles, const std::vector<PlacedTile>& placed) {
    double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        xmin = std::min(xmin, placed[i].x_px);
        ymin = std::min(ymin, placed[i].y_px);
        xmax = std::max(xmax, placed[i].x_px + tiles[i].image.width() - 1);
        ymax = std::max(ymax, placed[i].y_px + tiles[i].image.height() - 1);
    }
    Canvas c;
    c.x0 = static_cast<long>(std::floor(xmin + 1e-6));
    c.y0 = static_cast<long>(std::floor(ymin + 1e-6));
    c.width = static_cast<long>(std::ceil(xmax - 1e-6)) - c.x0 + 1;
    c.height = static_cast<long>(std::ceil(ymax - 1e-6)) - c.y0 + 1;
    return c;
}

} // namespace

Mosaic blend(const std::vector<MosaicTile>& tiles, const std::vector<PlacedTile>& placed, const BlendOptions& opts) {
    if (tiles.empty())
        throw PreconditionError("nothing to blend");
    if (placed.size() != tiles.size())
        throw PreconditionError("placement count does not match the tiles");
    const int channels = tiles.front().image.channels();
    for (const MosaicTile& t : tiles)
        if (t.image.channels() != channels)
            throw ChannelMismatchError("tiles differ in channel count");
    const Canvas cv = canvas_extent(tiles, placed);
    if (static_cast<double>(cv.width) * cv.height > static_cast<double>(opts.max_canvas_pixels))
        throw CanvasTooLargeError("canvas " + std::to_string(cv.width) + " x " + std::to_string(cv.height) +
                                  " exceeds the " + std::to_string(opts.max_canvas_pixels) + " pixel cap");

    Mosaic m;
    m.image = Image(static_cast<int>(cv.width), static_cast<int>(cv.height), channels);
    m.origin_x_px = static_cast<double>(cv.x0);
    m.origin_y_px = static_cast<double>(cv.y0);
    const int W = static_cast<int>(cv.width);
    const int H = static_cast<int>(cv.height);

    // Rows split into bands; each band accumulates independently.
    auto do_band = [&](int y_begin, int y_end) {
        std::vector<float> weight(static_cast<std::size_t>(W) * (y_end - y_begin), 0.0f);
        for (std::size_t t = 0; t < tiles.size(); ++t) {
            const Image& img = tiles[t].image;
            const double ox = placed[t].x_px - cv.x0;
            const double oy = placed[t].y_px - cv.y0;
            const int tw = img.width(), th = img.height();
            const int ya = std::max(y_begin, static_cast<int>(std::ceil(oy - 1e-6)));
            const int yb = std::min(y_end - 1, static_cast<int>(std::floor(oy + th - 1 + 1e-6)));
            const int xa = std::max(0, static_cast<int>(std::ceil(ox - 1e-6)));
            const int xb = std::min(W - 1, static_cast<int>(std::floor(ox + tw - 1 + 1e-6)));
            for (int y = ya; y <= yb; ++y) {
                const double ly = std::clamp(y - oy, 0.0, th - 1.0);
                const double wy = std::min(ly + 1.0, th - ly);
                for (int x = xa; x <= xb; ++x) {
                    const double lx = std::clamp(x - ox, 0.0, tw - 1.0);
                    const float wt = static_cast<float>(std::min(lx + 1.0, tw - lx) * wy);
                    weight[static_cast<std::size_t>(y - y_begin) * W + x] += wt;
                    for (int c = 0; c < channels; ++c)
                        m.image.at(x, y, c) += wt * img.sample(lx, ly, c);
                }
            }
        }
        for (int y = y_begin; y < y_end; ++y)
            for (int x = 0; x < W; ++x) {
                const float wt = weight[static_cast<std::size_t>(y - y_begin) * W + x];
                if (wt > 0.0f)
                    for (int c = 0; c < channels; ++c)
                        m.image.at(x, y, c) = std::clamp(m.image.at(x, y, c) / wt, 0.0f, 1.0f);
            }
    };
    int threads = opts.threads > 0 ? opts.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, std::max(1, H / 16));
    if (threads == 1) {
        do_band(0, H);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k)
            pool.emplace_back(do_band, H * k / threads, H * (k + 1) / threads);
        for (auto& t : pool)
            t.join();
    }
    return m;
}

std::string layout_json(const std::vector<PlacedTile>& placed, const Mosaic* mosaic) {
    double ox = 0.0, oy = 0.0;
    if (mosaic) {
        ox = mosaic->origin_x_px;
        oy = mosaic->origin_y_px;
    } else if (!placed.empty()) {
        ox = 1e300;
        oy = 1e300;
        for (const PlacedTile& p : placed) {
            ox = std::min(ox, std::floor(p.x_px + 1e-6));
            oy = std::min(oy, std::floor(p.y_px + 1e-6));
        }
    }
    nlohmann::ordered_json j;
    j["origin_x_px"] = detail::round9(ox);
    j["origin_y_px"] = detail::round9(oy);
    if (mosaic) {
        j["width"] = mosaic->image.width();
        j["height"] = mosaic->image.height();
    }
    auto arr = nlohmann::ordered_json::array();
    for (const PlacedTile& p : placed)
        arr.push_back({{"col", p.col},
                       {"row", p.row},
                       {"x_px", detail::round9(p.x_px - ox)},
                       {"y_px", detail::round9(p.y_px - oy)},
                       {"confidence", detail::round9(p.confidence)}});
    j["tiles"] = arr;
    return j.dump(2) + "\n";
}

void write_tiled_layout(const std::vector<MosaicTile>& tiles, const std::vector<PlacedTile>& placed,
                        const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const MosaicTile& t : tiles)
        write_raster(t.image, dir / DirectorySink::tile_name(t.col, t.row), 16);
    detail::write_text_atomic(dir / "layout.json", layout_json(placed));
}

std::vector<MosaicTile> load_scan_tiles(const std::filesystem::path& dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_text(dir / "scan.json"));
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("invalid scan.json: ") + e.what());
    }
    std::vector<MosaicTile> tiles;
    try {
        const double pixel_um = j.at("object_pixel_um").get<double>();
        for (const auto& t : j.at("tiles")) {
            const auto path = dir / t.at("file").get<std::string>();
            if (!std::filesystem::exists(path))
                continue; // an aborted scan leaves later tiles unwritten
            TilePose pose;
            pose.index = t.value("index", 0);
            pose.col = t.at("col").get<int>();
            pose.row = t.at("row").get<int>();
            pose.x_mm = t.at("x_mm").get<double>();
            pose.y_mm = t.at("y_mm").get<double>();
            tiles.push_back(make_mosaic_tile(pose, read_raster(path), pixel_um));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("invalid scan.json: ") + e.what());
    }
    if (tiles.empty())
        throw PreconditionError("no tile images found in " + dir.string());
    return tiles;
}

} // namespace wsi

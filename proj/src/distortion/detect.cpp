#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "wsi/distortion.hpp"
#include "wsi/errors.hpp"

namespace wsi {

namespace {

// Threshold plus separability (between-class over total variance, 1 for a
// perfectly two-level image).
std::pair<float, double> otsu_threshold(std::span<const float> v, float lo, float hi) {
    constexpr int bins = 256;
    std::array<double, bins> hist{};
    const float scale = (bins - 1) / (hi - lo);
    for (float x : v)
        hist[static_cast<int>((x - lo) * scale)] += 1.0;
    const double total = static_cast<double>(v.size());
    double sum_all = 0.0, sq_all = 0.0;
    for (int i = 0; i < bins; ++i) {
        sum_all += i * hist[i];
        sq_all += static_cast<double>(i) * i * hist[i];
    }
    const double var_total = sq_all / total - (sum_all / total) * (sum_all / total);
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_i = bins / 2;
    for (int i = 0; i < bins - 1; ++i) {
        w0 += hist[i];
        sum0 += i * hist[i];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0)
            continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_i = i;
        }
    }
    const double eta = var_total > 0.0 ? best / (total * total) / var_total : 0.0;
    return {lo + (best_i + 0.5f) / scale, eta};
}

struct Blob {
    int area = 0;
    int x0, y0, x1, y1;
    bool touches_border = false;
};

// Uniform bucket grid over centroids for neighbour queries.
class PointIndex {
public:
    PointIndex(const std::vector<Point2>& pts, int w, int h, double cell)
        : pts_(pts), cell_(cell), nx_(static_cast<int>(w / cell) + 1), ny_(static_cast<int>(h / cell) + 1),
          buckets_(static_cast<std::size_t>(nx_) * ny_) {
        for (std::size_t i = 0; i < pts.size(); ++i)
            buckets_[bucket(pts[i])].push_back(static_cast<int>(i));
    }

    std::vector<int> within(Point2 q, double radius) const {
        std::vector<int> out;
        const int bx0 = std::max(0, static_cast<int>((q.x - radius) / cell_));
        const int bx1 = std::min(nx_ - 1, static_cast<int>((q.x + radius) / cell_));
        const int by0 = std::max(0, static_cast<int>((q.y - radius) / cell_));
        const int by1 = std::min(ny_ - 1, static_cast<int>((q.y + radius) / cell_));
        for (int by = by0; by <= by1; ++by)
            for (int bx = bx0; bx <= bx1; ++bx)
                for (int i : buckets_[static_cast<std::size_t>(by) * nx_ + bx])
                    if (std::hypot(pts_[i].x - q.x, pts_[i].y - q.y) <= radius)
                        out.push_back(i);
        return out;
    }

private:
    std::size_t bucket(Point2 p) const {
        const int bx = std::clamp(static_cast<int>(p.x / cell_), 0, nx_ - 1);
        const int by = std::clamp(static_cast<int>(p.y / cell_), 0, ny_ - 1);
        return static_cast<std::size_t>(by) * nx_ + bx;
    }

    const std::vector<Point2>& pts_;
    double cell_;
    int nx_, ny_;
    std::vector<std::vector<int>> buckets_;
};

} // namespace

GridDetection detect_grid(const Image& mask, const GridOptions& opts) {
    if (mask.empty())
        throw PreconditionError("empty mask image");
    const Image gray = to_gray(mask);
    const int w = gray.width();
    const int h = gray.height();
    const auto px = gray.plane(0);
    const auto [mn, mx] = std::minmax_element(px.begin(), px.end());
    if (!(*mx - *mn > 0.05f))
        throw DetectionError("mask image has no contrast");
    const auto [thr, separability] = otsu_threshold(px, *mn, *mx);
    if (separability < 0.75)
        throw DetectionError("mask image is not two-level (Otsu separability " + std::to_string(separability) + ")");

    std::size_t above = 0;
    double sum_above = 0.0, sum_below = 0.0;
    for (float v : px) {
        if (v > thr) {
            ++above;
            sum_above += v;
        } else {
            sum_below += v;
        }
    }
    const std::size_t below = px.size() - above;
    // Dots are the minority class.
    const bool bright = above <= below;
    const float background = static_cast<float>(bright ? sum_below / std::max<std::size_t>(below, 1)
                                                       : sum_above / std::max<std::size_t>(above, 1));
    auto is_fg = [&](float v) { return bright ? v > thr : v <= thr; };

    std::vector<int> label(px.size(), 0);
    std::vector<Blob> blobs(1);
    std::vector<int> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i0 = static_cast<std::size_t>(y) * w + x;
            if (label[i0] || !is_fg(px[i0]))
                continue;
            const int id = static_cast<int>(blobs.size());
            Blob b{0, x, y, x, y, false};
            label[i0] = id;
            stack.assign(1, static_cast<int>(i0));
            while (!stack.empty()) {
                const int i = stack.back();
                stack.pop_back();
                const int cx = i % w, cy = i / w;
                ++b.area;
                b.x0 = std::min(b.x0, cx);
                b.x1 = std::max(b.x1, cx);
                b.y0 = std::min(b.y0, cy);
                b.y1 = std::max(b.y1, cy);
                if (cx == 0 || cy == 0 || cx == w - 1 || cy == h - 1)
                    b.touches_border = true;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h)
                            continue;
                        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
                        if (!label[j] && is_fg(px[j])) {
                            label[j] = id;
                            stack.push_back(static_cast<int>(j));
                        }
                    }
            }
            blobs.push_back(b);
        }
    }

    std::vector<int> areas;
    for (std::size_t i = 1; i < blobs.size(); ++i)
        if (!blobs[i].touches_border && blobs[i].area >= opts.min_area_px)
            areas.push_back(blobs[i].area);
    if (areas.size() < 4)
        throw DetectionError("too few dot components (" + std::to_string(areas.size()) + ")");
    std::nth_element(areas.begin(), areas.begin() + areas.size() / 2, areas.end());
    const double median_area = areas[areas.size() / 2];

    std::vector<Point2> pts;
    for (std::size_t id = 1; id < blobs.size(); ++id) {
        Blob& b = blobs[id];
        if (b.touches_border || b.area < opts.min_area_px || b.area < 0.3 * median_area ||
            b.area > 3.0 * median_area)
            continue;
        // Weighted centroid over the blob and its antialiased rim; pixels of
        // other blobs are excluded.
        double sw = 0.0, sx = 0.0, sy = 0.0;
        for (int y = std::max(0, b.y0 - 2); y <= std::min(h - 1, b.y1 + 2); ++y)
            for (int x = std::max(0, b.x0 - 2); x <= std::min(w - 1, b.x1 + 2); ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                if (label[i] != 0 && label[i] != static_cast<int>(id))
                    continue;
                const double wt = std::max(0.0f, bright ? px[i] - background : background - px[i]);
                sw += wt;
                sx += wt * x;
                sy += wt * y;
            }
        if (sw > 0.0)
            pts.push_back({sx / sw, sy / sw});
    }
    if (pts.size() < 4)
        throw DetectionError("too few dot components (" + std::to_string(pts.size()) + ")");

    const double cell = std::sqrt(static_cast<double>(w) * h / pts.size());
    const PointIndex index(pts, w, h, cell);
    std::vector<double> nn;
    nn.reserve(pts.size());
    for (const Point2& p : pts) {
        double best = 1e300;
        for (double radius = cell; best == 1e300 && radius < 8.0 * cell; radius *= 2.0)
            for (int j : index.within(p, radius)) {
                const double d = std::hypot(pts[j].x - p.x, pts[j].y - p.y);
                if (d > 0.0)
                    best = std::min(best, d);
            }
        if (best < 1e300)
            nn.push_back(best);
    }
    if (nn.empty())
        throw DetectionError("dots have no neighbours");
    std::nth_element(nn.begin(), nn.begin() + nn.size() / 2, nn.end());
    const double pitch = nn[nn.size() / 2];

    // Origin: the dot nearest the frame centre; basis from its neighbours.
    const Point2 centre{(w - 1) / 2.0, (h - 1) / 2.0};
    int origin = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (std::hypot(pts[i].x - centre.x, pts[i].y - centre.y) <
            std::hypot(pts[origin].x - centre.x, pts[origin].y - centre.y))
            origin = static_cast<int>(i);
    std::optional<Point2> u, v;
    double best_u = 1e300, best_v = 1e300;
    for (int j : index.within(pts[origin], 1.4 * pitch)) {
        if (j == origin)
            continue;
        const Point2 d{pts[j].x - pts[origin].x, pts[j].y - pts[origin].y};
        const double len = std::hypot(d.x, d.y);
        if (len < 0.7 * pitch)
            continue;
        const double ang_u = std::abs(std::atan2(d.y, d.x));
        const double ang_v = std::abs(std::atan2(d.y, d.x) - std::numbers::pi / 2);
        if (ang_u < std::numbers::pi / 4 && ang_u < best_u) {
            best_u = ang_u;
            u = d;
        }
        if (ang_v < std::numbers::pi / 4 && ang_v < best_v) {
            best_v = ang_v;
            v = d;
        }
    }
    // An edge origin may lack a +x or +y neighbour; mirror the other side.
    for (int j : index.within(pts[origin], 1.4 * pitch)) {
        const Point2 d{pts[origin].x - pts[j].x, pts[origin].y - pts[j].y};
        const double len = std::hypot(d.x, d.y);
        if (j == origin || len < 0.7 * pitch)
            continue;
        if (!u && std::abs(std::atan2(d.y, d.x)) < std::numbers::pi / 4)
            u = d;
        if (!v && std::abs(std::atan2(d.y, d.x) - std::numbers::pi / 2) < std::numbers::pi / 4)
            v = d;
    }
    if (!u || !v)
        throw DetectionError("ambiguous lattice: no neighbours along both axes near the centre");

    struct Site {
        int row, col;
        Point2 su, sv;
    };
    std::vector<std::optional<Site>> site(pts.size());
    std::map<std::pair<int, int>, int> taken;
    std::deque<int> queue{origin};
    site[origin] = Site{0, 0, *u, *v};
    taken[{0, 0}] = origin;
    const double tol = opts.match_tolerance * pitch;
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        const Site s = *site[i];
        const std::array<std::tuple<int, int, Point2>, 4> steps{{{0, 1, s.su},
                                                                 {0, -1, Point2{-s.su.x, -s.su.y}},
                                                                 {1, 0, s.sv},
                                                                 {-1, 0, Point2{-s.sv.x, -s.sv.y}}}};
        for (const auto& [dr, dc, step] : steps) {
            const Point2 pred{pts[i].x + step.x, pts[i].y + step.y};
            const auto hits = index.within(pred, tol);
            if (hits.empty())
                continue;
            if (hits.size() > 1)
                throw DetectionError("ambiguous lattice: several dots match one grid site");
            const int j = hits[0];
            const std::pair<int, int> rc{s.row + dr, s.col + dc};
            if (site[j]) {
                if (site[j]->row != rc.first || site[j]->col != rc.second)
                    throw DetectionError("ambiguous lattice: inconsistent row/col assignment");
                continue;
            }
            if (taken.count(rc))
                throw DetectionError("ambiguous lattice: grid site claimed twice");
            const Point2 actual{pts[j].x - pts[i].x, pts[j].y - pts[i].y};
            Site next{rc.first, rc.second, s.su, s.sv};
            if (dc != 0)
                next.su = {actual.x * dc, actual.y * dc};
            else
                next.sv = {actual.x * dr, actual.y * dr};
            site[j] = next;
            taken[rc] = j;
            queue.push_back(j);
        }
    }

    GridDetection det;
    det.pitch_px = pitch;
    det.image_width = w;
    det.image_height = h;
    for (const auto& [rc, i] : taken) {
        det.centroids.push_back(pts[i]);
        det.grid_assignment.push_back(rc);
    }

    // Expected sites: affine lattice through the assigned dots, counting
    // sites whose whole dot would lie inside the frame.
    const int n = static_cast<int>(det.centroids.size());
    Eigen::MatrixXd A(n, 3);
    Eigen::MatrixXd B(n, 2);
    int rmin = 0, rmax = 0, cmin = 0, cmax = 0;
    for (int k = 0; k < n; ++k) {
        const auto [r, c] = det.grid_assignment[k];
        A.row(k) << 1.0, c, r;
        B.row(k) << det.centroids[k].x, det.centroids[k].y;
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
    }
    if (n < 3)
        throw DetectionError("too few lattice points assigned");
    const Eigen::MatrixXd X = A.colPivHouseholderQr().solve(B);
    const double margin = std::sqrt(median_area / std::numbers::pi) + 1.0;
    int expected = 0;
    for (int r = rmin - 3; r <= rmax + 3; ++r)
        for (int c = cmin - 3; c <= cmax + 3; ++c) {
            const double x = X(0, 0) + c * X(1, 0) + r * X(2, 0);
            const double y = X(0, 1) + c * X(1, 1) + r * X(2, 1);
            if (x >= margin && y >= margin && x <= w - 1 - margin && y <= h - 1 - margin)
                ++expected;
        }
    det.expected_points = std::max(expected, n);
    if (n < opts.min_detected_fraction * det.expected_points)
        throw DetectionError("only " + std::to_string(n) + " of " + std::to_string(det.expected_points) +
                             " expected grid points detected");
    return det;
}

} // namespace wsi

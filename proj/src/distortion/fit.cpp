#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "wsi/distortion.hpp"
#include "wsi/errors.hpp"

namespace wsi {

namespace {

// For a fixed centre the model is linear in (k1, k2) and in the affine
// ideal lattice (origin, column step, row step):
//   d + (d - c) (k1 r^2 + k2 r^4) = o + col * U + row * V.
// Radii are normalized by `norm` to keep the system well conditioned.
struct InnerFit {
    Eigen::VectorXd params; // k1', k2', ox, oy, Ux, Uy, Vx, Vy
    Eigen::VectorXd residual;
};

InnerFit solve_inner(const GridDetection& det, double cx, double cy, double norm) {
    const int n = static_cast<int>(det.centroids.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, 8);
    Eigen::VectorXd b(2 * n);
    for (int i = 0; i < n; ++i) {
        const Point2 d = det.centroids[i];
        const auto [row, col] = det.grid_assignment[i];
        const double dx = (d.x - cx) / norm;
        const double dy = (d.y - cy) / norm;
        const double t2 = dx * dx + dy * dy;
        A.row(2 * i) << -dx * t2 * norm, -dx * t2 * t2 * norm, 1.0, 0.0, col, 0.0, row, 0.0;
        A.row(2 * i + 1) << -dy * t2 * norm, -dy * t2 * t2 * norm, 0.0, 1.0, 0.0, col, 0.0, row;
        b(2 * i) = d.x;
        b(2 * i + 1) = d.y;
    }
    InnerFit f;
    f.params = A.colPivHouseholderQr().solve(b);
    f.residual = A * f.params - b;
    return f;
}

} // namespace

DistortionModel fit_distortion(const GridDetection& det, const FitOptions& opts) {
    const std::size_t n = det.centroids.size();
    if (n < 20)
        throw PreconditionError("distortion fit needs at least 20 matched points, got " + std::to_string(n));
    if (det.grid_assignment.size() != n)
        throw PreconditionError("grid assignment does not match the centroids");
    if (det.image_width <= 0 || det.image_height <= 0)
        throw PreconditionError("grid detection lacks the frame size");

    const double w = det.image_width;
    const double h = det.image_height;
    const double norm = std::hypot(w, h) / 2.0;
    double cx = (w - 1) / 2.0;
    double cy = (h - 1) / 2.0;

    // Levenberg-Marquardt over the centre with the linear part projected out.
    auto cost = [&](double x, double y) { return solve_inner(det, x, y, norm).residual.squaredNorm(); };
    double lambda = 1e-3;
    InnerFit cur = solve_inner(det, cx, cy, norm);
    double c0 = cur.residual.squaredNorm();
    bool converged = false;
    for (int iter = 0; iter < 40 && !converged; ++iter) {
        constexpr double hstep = 0.5;
        const Eigen::VectorXd rx = solve_inner(det, cx + hstep, cy, norm).residual;
        const Eigen::VectorXd ry = solve_inner(det, cx, cy + hstep, norm).residual;
        Eigen::MatrixXd J(cur.residual.size(), 2);
        J.col(0) = (rx - cur.residual) / hstep;
        J.col(1) = (ry - cur.residual) / hstep;
        const Eigen::Matrix2d JtJ = J.transpose() * J;
        const Eigen::Vector2d g = J.transpose() * cur.residual;
        if (JtJ.trace() < 1e-12 || g.norm() < 1e-12)
            break;
        bool improved = false;
        for (int tries = 0; tries < 10 && !improved; ++tries) {
            Eigen::Matrix2d M = JtJ;
            M.diagonal() *= 1.0 + lambda;
            M.diagonal().array() += 1e-9 * JtJ.trace();
            const Eigen::Vector2d step = -M.ldlt().solve(g);
            const double nx = std::clamp(cx + step(0), 0.0, w - 1);
            const double ny = std::clamp(cy + step(1), 0.0, h - 1);
            const double c1 = cost(nx, ny);
            if (c1 < c0) {
                improved = true;
                const double moved = std::hypot(nx - cx, ny - cy);
                cx = nx;
                cy = ny;
                c0 = c1;
                lambda = std::max(lambda / 3.0, 1e-9);
                cur = solve_inner(det, cx, cy, norm);
                converged = moved < 1e-4;
            } else {
                lambda *= 10.0;
            }
        }
        if (!improved)
            break;
    }

    DistortionModel m;
    m.center_x = cx;
    m.center_y = cy;
    m.k1 = cur.params(0) / (norm * norm);
    m.k2 = cur.params(1) / std::pow(norm, 4);
    if (opts.ideal_pitch_px) {
        const double ux = cur.params(4), uy = cur.params(5), vx = cur.params(6), vy = cur.params(7);
        const double fitted_pitch = std::sqrt(std::abs(ux * vy - uy * vx));
        m.scale = *opts.ideal_pitch_px / fitted_pitch;
    }
    m.residual_rms_px = m.scale * std::sqrt(cur.residual.squaredNorm() / static_cast<double>(n));
    if (m.residual_rms_px > opts.max_residual_rms_px)
        throw FitRejectedError("distortion fit residual " + std::to_string(m.residual_rms_px) + " px exceeds " +
                               std::to_string(opts.max_residual_rms_px) + " px");
    if (!m.invertible_over(det.image_width, det.image_height))
        throw FitRejectedError("fitted distortion is not monotone over the frame");
    return m;
}

} // namespace wsi

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "common/fft.hpp"
#include "wsi/errors.hpp"
#include "wsi/simscope.hpp"

namespace wsi {

void OpticsConfig::validate() const {
    if (!(illum_na > 0.0 && illum_na < 1.0))
        throw PreconditionError("illumination NA must lie in (0, 1)");
    if (!(objective_na > 0.0 && objective_na <= 1.0))
        throw PreconditionError("objective NA must lie in (0, 1]");
    if (!(lateral_magnification() > 0.0))
        throw PreconditionError("lateral magnification must be positive");
    if (!(pixel_pitch_um > 0.0) || !(wavelength_um > 0.0))
        throw PreconditionError("pixel pitch and wavelength must be positive");
    if (sensor_width < 8 || sensor_height < 8)
        throw PreconditionError("sensor must be at least 8 x 8 pixels");
}

double channel_shift_px(double defocus_um, const OpticsConfig& cfg) {
    return 2.0 * std::tan(std::asin(cfg.illum_na)) * defocus_um / cfg.object_pixel_um();
}

double net_defocus_um(const Specimen& spec, const CaptureState& st, const SimConfig& sim) {
    return spec.focal_surface.height_um(st.stage_x_mm, st.stage_y_mm) -
           (st.stage_z_um + st.ring_steps * sim.object_um_per_step);
}

double vibration_amplitude_px(const CaptureState& st, const SimConfig& sim) {
    if (st.time_since_move_s < 0.0)
        return 0.0;
    const double a = st.isolation_pad ? sim.vibration_amplitude_px_pad : sim.vibration_amplitude_px_no_pad;
    const double tau = st.isolation_pad ? sim.vibration_tau_pad_s : sim.vibration_tau_no_pad_s;
    return a * std::exp(-st.time_since_move_s / tau);
}

std::vector<float> disk_kernel(double radius_px, int& half_width) {
    if (radius_px < 0.5) {
        half_width = 0;
        return {1.0f};
    }
    half_width = static_cast<int>(std::ceil(radius_px + 0.5));
    const int side = 2 * half_width + 1;
    std::vector<float> k(static_cast<std::size_t>(side) * side);
    double sum = 0.0;
    for (int y = -half_width; y <= half_width; ++y)
        for (int x = -half_width; x <= half_width; ++x) {
            const double w = std::clamp(radius_px + 0.5 - std::hypot(x, y), 0.0, 1.0);
            k[(y + half_width) * side + (x + half_width)] = static_cast<float>(w);
            sum += w;
        }
    for (auto& v : k)
        v = static_cast<float>(v / sum);
    return k;
}

namespace {

// Moving average of fractional length `len` over a strided line into a
// contiguous `out`, pixel i covering [i-0.5, i+0.5]; outside the line the
// edge value continues.
void box_line(const float* in, float* out, int n, std::ptrdiff_t stride, double len, std::vector<double>& cum) {
    cum.resize(static_cast<std::size_t>(n) + 1);
    cum[0] = 0.0;
    for (int i = 0; i < n; ++i)
        cum[i + 1] = cum[i] + in[i * stride];
    // Integral of the piecewise-constant signal from -0.5 to t.
    auto integral = [&](double t) {
        const double s = t + 0.5;
        if (s <= 0.0)
            return s * in[0];
        if (s >= n)
            return cum[n] + (s - n) * in[(n - 1) * stride];
        const int k = static_cast<int>(s);
        return cum[k] + (s - k) * in[k * stride];
    };
    const double half = len / 2.0;
    for (int i = 0; i < n; ++i)
        out[i] = static_cast<float>((integral(i + half) - integral(i - half)) / len);
}

void box_blur(std::vector<float>& plane, int w, int h, double len, Axis axis) {
    if (len <= 1.0)
        return;
    std::vector<double> cum;
    std::vector<float> tmp(axis == Axis::x ? w : h);
    if (axis == Axis::x) {
        for (int y = 0; y < h; ++y) {
            float* row = plane.data() + static_cast<std::size_t>(y) * w;
            box_line(row, tmp.data(), w, 1, len, cum);
            std::copy(tmp.begin(), tmp.end(), row);
        }
    } else {
        for (int x = 0; x < w; ++x) {
            float* col = plane.data() + x;
            box_line(col, tmp.data(), h, w, len, cum);
            for (int y = 0; y < h; ++y)
                col[static_cast<std::size_t>(y) * w] = tmp[y];
        }
    }
}

// Inverse of the forward pincushion r_d = r (1 + k1 r^2 + k2 r^4).
double undistort_radius(double rd, double k1, double k2) {
    double r = rd;
    for (int i = 0; i < 8; ++i) {
        const double r2 = r * r;
        const double f = r * (1.0 + k1 * r2 + k2 * r2 * r2) - rd;
        const double df = 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2;
        const double step = f / df;
        r -= step;
        if (std::abs(step) < 1e-9)
            break;
    }
    return r;
}

float bilinear(const float* p, int w, int h, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    x0 = std::min(x0, w - 2 < 0 ? 0 : w - 2);
    y0 = std::min(y0, h - 2 < 0 ? 0 : h - 2);
    const float ax = static_cast<float>(x - x0);
    const float ay = static_cast<float>(y - y0);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const float* r0 = p + static_cast<std::size_t>(y0) * w;
    const float* r1 = p + static_cast<std::size_t>(y1) * w;
    const float top = r0[x0] + ax * (r0[x1] - r0[x0]);
    const float bot = r1[x0] + ax * (r1[x1] - r1[x0]);
    return top + ay * (bot - top);
}

} // namespace

Image render(const Specimen& spec, const CaptureState& st, const OpticsConfig& optics, const SimConfig& sim,
             const RenderOptions& opts) {
    optics.validate();
    if (spec.texture.empty() || spec.texture.channels() != 3)
        throw PreconditionError("specimen texture must be a non-empty RGB image");

    const int W = optics.sensor_width;
    const int H = optics.sensor_height;
    const double p_obj = optics.object_pixel_um();
    const double half_w_mm = W * p_obj / 2000.0;
    const double half_h_mm = H * p_obj / 2000.0;
    constexpr double tol = 1e-9;
    if (st.stage_x_mm - half_w_mm < -tol || st.stage_x_mm + half_w_mm > spec.width_mm() + tol ||
        st.stage_y_mm - half_h_mm < -tol || st.stage_y_mm + half_h_mm > spec.height_mm() + tol)
        throw OutOfBoundsError("field of view at (" + std::to_string(st.stage_x_mm) + ", " +
                               std::to_string(st.stage_y_mm) + ") mm leaves the specimen");

    const double z_net = net_defocus_um(spec, st, sim);
    const double blur_r = std::abs(z_net) * optics.objective_na / p_obj;
    const bool dual = st.led_mode == LedMode::rg_dual;
    const double shift = dual ? channel_shift_px(z_net, optics) : 0.0;

    double motion_x = std::abs(st.x_velocity_mm_s) * sim.exposure_s * 1000.0 / p_obj;
    double motion_y = std::abs(st.y_velocity_mm_s) * sim.exposure_s * 1000.0 / p_obj;
    double vib_dx = 0.0, vib_dy = 0.0;
    if (st.x_velocity_mm_s == 0.0 && st.y_velocity_mm_s == 0.0) {
        const double a = vibration_amplitude_px(st, sim);
        if (a > 0.0) {
            std::mt19937_64 vib_rng(st.noise_seed ^ 0xa5a5a5a5deadbeefull);
            std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
            const double theta = angle(vib_rng);
            const double phase = angle(vib_rng);
            vib_dx = a * std::cos(phase) * std::cos(theta);
            vib_dy = a * std::cos(phase) * std::sin(theta);
            motion_x += 2.0 * a * std::abs(std::cos(theta));
            motion_y += 2.0 * a * std::abs(std::sin(theta));
        }
    }

    int disk_half = 0;
    const auto disk = disk_kernel(blur_r, disk_half);
    const int margin_x = disk_half + static_cast<int>(std::ceil(motion_x / 2.0)) + 4;
    const int margin_y = disk_half + static_cast<int>(std::ceil(motion_y / 2.0)) + 4;
    const int ww = disk_half > 0 ? detail::good_fft_size(W + 2 * margin_x) : W + 2 * margin_x;
    const int wh = disk_half > 0 ? detail::good_fft_size(H + 2 * margin_y) : H + 2 * margin_y;

    // Frame pixel u -> object position relative to the FOV center.
    const double cx = (W - 1) / 2.0;
    const double cy = (H - 1) / 2.0;
    const double tex_pitch = spec.texture_pitch_um;
    const double origin_x = st.stage_x_mm * 1000.0 / tex_pitch - 0.5;
    const double origin_y = st.stage_y_mm * 1000.0 / tex_pitch - 0.5;
    const double px_scale = p_obj / tex_pitch;
    const int tw = spec.texture.width();
    const int th = spec.texture.height();
    const float* tex_r = spec.texture.plane(0).data();
    const float* tex_g = spec.texture.plane(1).data();

    const int channels_rendered = dual ? 2 : 3;
    std::vector<std::vector<float>> work(channels_rendered,
                                         std::vector<float>(static_cast<std::size_t>(ww) * wh));
    const bool warp = opts.distortion && (sim.k1 != 0.0 || sim.k2 != 0.0);
    for (int j = 0; j < wh; ++j) {
        const double v = j - margin_y - cy;
        for (int i = 0; i < ww; ++i) {
            const double u = i - margin_x - cx;
            double ui = u, vi = v;
            if (warp) {
                const double rd = std::hypot(u, v);
                if (rd > 0.0) {
                    const double f = undistort_radius(rd, sim.k1, sim.k2) / rd;
                    ui = u * f;
                    vi = v * f;
                }
            }
            const double ty = origin_y + (vi + vib_dy) * px_scale;
            const std::size_t idx = static_cast<std::size_t>(j) * ww + i;
            if (dual) {
                // Red sees the specimen displaced by +s/2, green by -s/2.
                // The slide is taken as spectrally flat across the two LED
                // bands: both copies carry the mean red/green transmittance.
                const double xr = origin_x + (ui + vib_dx + shift / 2.0) * px_scale;
                const double xg = origin_x + (ui + vib_dx - shift / 2.0) * px_scale;
                work[0][idx] = 0.5f * (bilinear(tex_r, tw, th, xr, ty) + bilinear(tex_g, tw, th, xr, ty));
                work[1][idx] = 0.5f * (bilinear(tex_r, tw, th, xg, ty) + bilinear(tex_g, tw, th, xg, ty));
            } else {
                const double tx = origin_x + (ui + vib_dx) * px_scale;
                for (int c = 0; c < 3; ++c)
                    work[c][idx] = bilinear(spec.texture.plane(c).data(), tw, th, tx, ty);
            }
        }
    }

    if (disk_half > 0) {
        std::vector<float*> planes;
        for (auto& p : work)
            planes.push_back(p.data());
        detail::convolve_circular(planes, ww, wh, disk, disk_half);
    }
    for (auto& p : work) {
        box_blur(p, ww, wh, motion_x, Axis::x);
        box_blur(p, ww, wh, motion_y, Axis::y);
    }

    Image out(W, H, 3);
    out.pixel_pitch_um = p_obj;
    for (int c = 0; c < channels_rendered; ++c) {
        auto dst = out.plane(c);
        for (int y = 0; y < H; ++y) {
            const float* src = work[c].data() + static_cast<std::size_t>(y + margin_y) * ww + margin_x;
            std::copy(src, src + W, dst.begin() + static_cast<std::ptrdiff_t>(y) * W);
        }
    }

    const bool noisy = opts.noise && sim.read_noise_sigma > 0.0;
    std::mt19937_64 rng(st.noise_seed);
    std::normal_distribution<float> gauss(0.0f, static_cast<float>(sim.read_noise_sigma));
    for (auto& v : out.data()) {
        if (noisy)
            v += gauss(rng);
        v = std::clamp(v, 0.0f, 1.0f);
    }
    return out;
}

} // namespace wsi

#include "wsi/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wsi/errors.hpp"

namespace wsi {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0)
        throw PreconditionError("image dimensions must be positive");
    if (channels != 1 && channels != 3)
        throw PreconditionError("image must have 1 or 3 channels");
    data_.assign(plane_size() * channels, fill);
}

Image Image::from_data(int width, int height, int channels, std::vector<float> data) {
    Image img(width, height, channels);
    if (data.size() != img.data_.size())
        throw PreconditionError("image data length " + std::to_string(data.size()) +
                                " does not match " + std::to_string(img.data_.size()));
    for (float v : data) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw PreconditionError("image intensity outside [0,1]");
    }
    img.data_ = std::move(data);
    return img;
}

float Image::clamped(int x, int y, int c) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return data_[index(x, y, c)];
}

float Image::sample(double x, double y, int c) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const float ax = static_cast<float>(x - fx);
    const float ay = static_cast<float>(y - fy);
    const float v00 = clamped(x0, y0, c);
    const float v10 = clamped(x0 + 1, y0, c);
    const float v01 = clamped(x0, y0 + 1, c);
    const float v11 = clamped(x0 + 1, y0 + 1, c);
    const float top = v00 + ax * (v10 - v00);
    const float bot = v01 + ax * (v11 - v01);
    return top + ay * (bot - top);
}

std::span<const float> Image::plane(int c) const {
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * plane_size(),
                                                 plane_size());
}

std::span<float> Image::plane(int c) {
    return std::span<float>(data_).subspan(static_cast<std::size_t>(c) * plane_size(),
                                           plane_size());
}

Kernel1D Kernel1D::identity(Axis axis) { return Kernel1D{{1.0f}, axis}; }

Kernel1D Kernel1D::box(int length, Axis axis) {
    if (length <= 0 || length % 2 == 0)
        throw PreconditionError("box kernel length must be odd and positive");
    return Kernel1D{std::vector<float>(length, 1.0f / static_cast<float>(length)), axis};
}

Kernel1D Kernel1D::fractional_box(double length, Axis axis) {
    if (!(length >= 0.0))
        throw PreconditionError("box length must be non-negative");
    if (length <= 1.0)
        return identity(axis);
    // Support [-L/2, L/2]; tap i covers [i-0.5, i+0.5].
    const double half = length / 2.0;
    const int radius = static_cast<int>(std::ceil(half - 0.5));
    std::vector<float> taps(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) {
        const double lo = std::max(i - 0.5, -half);
        const double hi = std::min(i + 0.5, half);
        taps[i + radius] = static_cast<float>(std::max(0.0, hi - lo) / length);
    }
    return Kernel1D{std::move(taps), axis};
}

Kernel1D Kernel1D::gaussian(double sigma, Axis axis) {
    if (sigma <= 0.0)
        return identity(axis);
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<float> taps(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        taps[i + radius] = static_cast<float>(w);
        sum += w;
    }
    for (auto& t : taps)
        t = static_cast<float>(t / sum);
    return Kernel1D{std::move(taps), axis};
}

Image extract_channel(const Image& img, Channel which) {
    // A gray image already is its only plane, which makes extraction idempotent.
    if (img.channels() == 1)
        return img;
    if (img.channels() != 3)
        throw ChannelMismatchError("extract_channel requires a gray or RGB image");
    Image out(img.width(), img.height(), 1);
    const auto src = img.plane(static_cast<int>(which));
    std::copy(src.begin(), src.end(), out.plane(0).begin());
    out.pixel_pitch_um = img.pixel_pitch_um;
    return out;
}

Image merge_channels(std::span<const Image> planes) {
    if (planes.size() != 1 && planes.size() != 3)
        throw ChannelMismatchError("merge_channels needs 1 or 3 planes");
    const int w = planes[0].width();
    const int h = planes[0].height();
    Image out(w, h, static_cast<int>(planes.size()));
    for (std::size_t c = 0; c < planes.size(); ++c) {
        if (planes[c].channels() != 1 || planes[c].width() != w || planes[c].height() != h)
            throw ChannelMismatchError("merge_channels planes must be equal-size gray images");
        const auto src = planes[c].plane(0);
        std::copy(src.begin(), src.end(), out.plane(static_cast<int>(c)).begin());
    }
    out.pixel_pitch_um = planes[0].pixel_pitch_um;
    return out;
}

Image translate(const Image& img, double dx, double dy) {
    Image out(img.width(), img.height(), img.channels());
    out.pixel_pitch_um = img.pixel_pitch_um;
    const bool integral = dx == std::floor(dx) && dy == std::floor(dy);
    for (int c = 0; c < img.channels(); ++c) {
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                out.at(x, y, c) =
                    integral ? img.clamped(x - static_cast<int>(dx), y - static_cast<int>(dy), c)
                             : img.sample(x - dx, y - dy, c);
            }
        }
    }
    return out;
}

Image convolve_separable(const Image& img, const Kernel1D& k) {
    if (k.taps.empty() || k.taps.size() % 2 == 0)
        throw PreconditionError("kernel length must be odd");
    const int r = k.radius();
    const int w = img.width();
    const int h = img.height();
    Image out(w, h, img.channels());
    out.pixel_pitch_um = img.pixel_pitch_um;
    std::vector<float> line;
    for (int c = 0; c < img.channels(); ++c) {
        const auto src = img.plane(c);
        auto dst = out.plane(c);
        if (k.axis == Axis::x) {
            line.resize(static_cast<std::size_t>(w) + 2 * r);
            for (int y = 0; y < h; ++y) {
                const float* row = src.data() + static_cast<std::size_t>(y) * w;
                for (int i = 0; i < w + 2 * r; ++i)
                    line[i] = row[std::clamp(i - r, 0, w - 1)];
                float* orow = dst.data() + static_cast<std::size_t>(y) * w;
                for (int x = 0; x < w; ++x) {
                    float acc = 0.0f;
                    for (int t = 0; t <= 2 * r; ++t)
                        acc += k.taps[t] * line[x + t];
                    orow[x] = acc;
                }
            }
        } else {
            std::vector<float> acc(w);
            for (int y = 0; y < h; ++y) {
                std::fill(acc.begin(), acc.end(), 0.0f);
                for (int t = 0; t <= 2 * r; ++t) {
                    const int sy = std::clamp(y + t - r, 0, h - 1);
                    const float* row = src.data() + static_cast<std::size_t>(sy) * w;
                    const float tap = k.taps[t];
                    for (int x = 0; x < w; ++x)
                        acc[x] += tap * row[x];
                }
                std::copy(acc.begin(), acc.end(), dst.begin() + static_cast<std::ptrdiff_t>(y) * w);
            }
        }
    }
    return out;
}

Image to_gray(const Image& img) {
    if (img.channels() == 1)
        return img;
    Image out(img.width(), img.height(), 1);
    out.pixel_pitch_um = img.pixel_pitch_um;
    auto dst = out.plane(0);
    for (int c = 0; c < img.channels(); ++c) {
        const auto src = img.plane(c);
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] += src[i] / static_cast<float>(img.channels());
    }
    return out;
}

Image crop(const Image& img, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || x0 + w > img.width() || y0 + h > img.height())
        throw OutOfBoundsError("crop window outside image");
    Image out(w, h, img.channels());
    out.pixel_pitch_um = img.pixel_pitch_um;
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < h; ++y) {
            const auto* src = img.plane(c).data() + static_cast<std::size_t>(y + y0) * img.width() + x0;
            std::copy(src, src + w, out.plane(c).data() + static_cast<std::size_t>(y) * w);
        }
    return out;
}

} // namespace wsi

#include <algorithm>
#include <cmath>
#include <list>
#include <mutex>

#include "wsi/distortion.hpp"
#include "wsi/errors.hpp"

namespace wsi {

namespace {
constexpr float weight_one = 32768.0f;
}

RemapTable::RemapTable(const DistortionModel& model, int width, int height)
    : model_(model), width_(width), height_(height) {
    if (width < 2 || height < 2)
        throw PreconditionError("remap needs a frame of at least 2 x 2");
    if (!model.invertible_over(width, height))
        throw PreconditionError("distortion model is not invertible over the frame");
    const std::size_t n = static_cast<std::size_t>(width) * height;
    offset_.resize(n);
    wx_.resize(n);
    wy_.resize(n);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Point2 s = model.to_distorted({static_cast<double>(x), static_cast<double>(y)});
            const double sx = std::clamp(s.x, 0.0, width - 1.0);
            const double sy = std::clamp(s.y, 0.0, height - 1.0);
            const int x0 = std::min(static_cast<int>(sx), width - 2);
            const int y0 = std::min(static_cast<int>(sy), height - 2);
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            offset_[i] = static_cast<std::uint32_t>(static_cast<std::size_t>(y0) * width + x0);
            wx_[i] = static_cast<std::uint16_t>(std::lround((sx - x0) * weight_one));
            wy_[i] = static_cast<std::uint16_t>(std::lround((sy - y0) * weight_one));
        }
    }
}

Image RemapTable::apply(const Image& img) const {
    Image out;
    apply(img, out);
    return out;
}

void RemapTable::apply(const Image& img, Image& out) const {
    if (img.width() != width_ || img.height() != height_)
        throw PreconditionError("frame size does not match the remap table");
    if (&out == &img)
        throw PreconditionError("remap cannot run in place");
    if (out.width() != width_ || out.height() != height_ || out.channels() != img.channels())
        out = Image(width_, height_, img.channels());
    const std::size_t n = offset_.size();
    const std::size_t w = static_cast<std::size_t>(width_);
    constexpr float inv = 1.0f / weight_one;
    auto bilerp = [w](const float* p, float ax, float ay) {
        const float top = p[0] + ax * (p[1] - p[0]);
        const float bot = p[w] + ax * (p[w + 1] - p[w]);
        return top + ay * (bot - top);
    };
    if (img.channels() == 3) {
        // One pass over the table for all planes.
        const float* s0 = img.plane(0).data();
        const float* s1 = img.plane(1).data();
        const float* s2 = img.plane(2).data();
        float* d0 = out.plane(0).data();
        float* d1 = out.plane(1).data();
        float* d2 = out.plane(2).data();
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t o = offset_[i];
            const float ax = wx_[i] * inv;
            const float ay = wy_[i] * inv;
            d0[i] = bilerp(s0 + o, ax, ay);
            d1[i] = bilerp(s1 + o, ax, ay);
            d2[i] = bilerp(s2 + o, ax, ay);
        }
    } else {
        const float* src = img.plane(0).data();
        float* dst = out.plane(0).data();
        for (std::size_t i = 0; i < n; ++i)
            dst[i] = bilerp(src + offset_[i], wx_[i] * inv, wy_[i] * inv);
    }
    out.pixel_pitch_um = img.pixel_pitch_um;
}

std::shared_ptr<const RemapTable> cached_remap(const DistortionModel& model, int width, int height) {
    static std::mutex mu;
    static std::list<std::shared_ptr<const RemapTable>> cache;
    constexpr std::size_t capacity = 3;
    {
        std::lock_guard lock(mu);
        for (auto it = cache.begin(); it != cache.end(); ++it) {
            if ((*it)->model() == model && (*it)->width() == width && (*it)->height() == height) {
                auto hit = *it;
                cache.splice(cache.begin(), cache, it);
                return hit;
            }
        }
    }
    // Built outside the lock; a concurrent miss may build a duplicate, which
    // is harmless.
    auto table = std::make_shared<const RemapTable>(model, width, height);
    std::lock_guard lock(mu);
    cache.push_front(table);
    if (cache.size() > capacity)
        cache.pop_back();
    return table;
}

Image correct(const Image& img, const DistortionModel& model) {
    if (img.empty())
        throw PreconditionError("cannot correct an empty image");
    if (model.is_identity())
        return img;
    return cached_remap(model, img.width(), img.height())->apply(img);
}

void correct(const Image& img, const DistortionModel& model, Image& out) {
    if (img.empty())
        throw PreconditionError("cannot correct an empty image");
    if (model.is_identity()) {
        out = img;
        return;
    }
    cached_remap(model, img.width(), img.height())->apply(img, out);
}

} // namespace wsi

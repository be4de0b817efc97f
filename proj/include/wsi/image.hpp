#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace wsi {

enum class Channel { red = 0, green = 1, blue = 2 };
enum class Axis { x, y };

/// Planar float raster. Channel c occupies data()[c*w*h, (c+1)*w*h), each
/// plane row-major. Intensities are normalized to [0,1].
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, float fill = 0.0f);

    /// Validating constructor: checks size and that every value is finite
    /// and within [0,1].
    static Image from_data(int width, int height, int channels, std::vector<float> data);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

    float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
    float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }

    /// Edge-replicated read.
    float clamped(int x, int y, int c = 0) const;
    /// Bilinear sample with edge replication.
    float sample(double x, double y, int c = 0) const;

    std::span<const float> plane(int c) const;
    std::span<float> plane(int c);
    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    std::optional<double> pixel_pitch_um;

    friend bool operator==(const Image& a, const Image& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.channels_ == b.channels_ &&
               a.data_ == b.data_;
    }

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// Odd-length 1-D convolution kernel applied along one axis.
struct Kernel1D {
    std::vector<float> taps;
    Axis axis = Axis::x;

    int radius() const { return static_cast<int>(taps.size() / 2); }

    static Kernel1D identity(Axis axis = Axis::x);
    static Kernel1D box(int length, Axis axis);
    /// Box of fractional length: full taps plus partial end taps so the total
    /// support equals `length` pixels. Normalized.
    static Kernel1D fractional_box(double length, Axis axis);
    static Kernel1D gaussian(double sigma, Axis axis);
};

Image extract_channel(const Image& img, Channel which);

/// Merge single-channel planes into a multi-channel image.
Image merge_channels(std::span<const Image> planes);

/// Shift content by (dx, dy): out(x, y) = in(x - dx, y - dy), bilinear,
/// edge replication outside the support.
Image translate(const Image& img, double dx, double dy);

Image convolve_separable(const Image& img, const Kernel1D& k);

/// Mean over the channels of a multi-channel image; identity for gray.
Image to_gray(const Image& img);

/// Crop a w x h window starting at (x0, y0); the window must lie inside.
Image crop(const Image& img, int x0, int y0, int w, int h);

} // namespace wsi

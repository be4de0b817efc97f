#include "wsi/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

#include "wsi/errors.hpp"

namespace wsi {

namespace {

std::uint16_t quantize(float v, int bit_depth) {
    const float full = bit_depth == 16 ? 65535.0f : 255.0f;
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * full));
}

void check_depth(int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw PreconditionError("unsupported bit depth " + std::to_string(bit_depth));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DecodeError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------- PNG

struct MemReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->size)
        png_error(png, "truncated PNG stream");
    std::memcpy(out, r->data + r->pos, n);
    r->pos += n;
}

void png_mem_write(png_structp png, png_bytep in, png_size_t n) {
    auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    v->insert(v->end(), in, in + n);
}

void png_flush_noop(png_structp) {}

void png_warning_silent(png_structp, png_const_charp) {}

} // namespace

std::vector<std::uint8_t> encode_png(const Image& img, int bit_depth) {
    check_depth(bit_depth);
    const int w = img.width();
    const int h = img.height();
    const int ch = img.channels();
    const std::size_t bps = bit_depth / 8;
    std::vector<std::uint8_t> rows(static_cast<std::size_t>(w) * h * ch * bps);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                const std::uint16_t q = quantize(img.at(x, y, c), bit_depth);
                std::uint8_t* p = &rows[((static_cast<std::size_t>(y) * w + x) * ch + c) * bps];
                if (bps == 2) {
                    p[0] = static_cast<std::uint8_t>(q >> 8); // PNG is big-endian
                    p[1] = static_cast<std::uint8_t>(q & 0xff);
                } else {
                    p[0] = static_cast<std::uint8_t>(q);
                }
            }
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> row_ptrs(h);
    for (int y = 0; y < h; ++y)
        row_ptrs[y] = &rows[static_cast<std::size_t>(y) * w * ch * bps];

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                              png_warning_silent);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_mem_write, png_flush_noop);
    png_set_compression_level(png, 1);
    png_set_IHDR(png, info, w, h, bit_depth, ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw DecodeError("not a PNG stream");
    MemReader reader{bytes.data(), bytes.size(), 0};
    std::vector<std::uint8_t> rows;
    std::vector<png_bytep> row_ptrs;
    png_uint_32 w = 0, h = 0;
    int depth = 0, color = 0, interlace = 0;

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                             png_warning_silent);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("malformed or truncated PNG");
    }
    png_set_read_fn(png, &reader, png_mem_read);
    png_read_info(png, info);
    png_get_IHDR(png, info, &w, &h, &depth, &color, &interlace, nullptr, nullptr);
    const bool supported = (depth == 8 || depth == 16) &&
                            (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_RGB);
    if (!supported) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("unsupported PNG layout (need 8/16-bit gray or RGB)");
    }
    if (interlace != PNG_INTERLACE_NONE)
        png_set_interlace_handling(png);
    png_read_update_info(png, info);
    const int ch = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    rows.resize(rowbytes * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        row_ptrs[y] = rows.data() + y * rowbytes;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(static_cast<int>(w), static_cast<int>(h), ch);
    const float full = depth == 16 ? 65535.0f : 255.0f;
    for (png_uint_32 y = 0; y < h; ++y)
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                const std::uint8_t* p = row_ptrs[y] + (x * ch + c) * (depth / 8);
                const unsigned v = depth == 16 ? (p[0] << 8) | p[1] : p[0];
                img.at(static_cast<int>(x), static_cast<int>(y), c) = static_cast<float>(v) / full;
            }
    return img;
}

// ---------------------------------------------------------------- TIFF

namespace {

enum : std::uint16_t {
    kTagWidth = 256,
    kTagHeight = 257,
    kTagBitsPerSample = 258,
    kTagCompression = 259,
    kTagPhotometric = 262,
    kTagStripOffsets = 273,
    kTagSamplesPerPixel = 277,
    kTagRowsPerStrip = 278,
    kTagStripByteCounts = 279,
    kTagPlanarConfig = 284,
};

class TiffCursor {
public:
    TiffCursor(std::span<const std::uint8_t> b, bool little) : bytes_(b), little_(little) {}

    std::uint32_t u8(std::size_t off) const {
        need(off, 1);
        return bytes_[off];
    }
    std::uint32_t u16(std::size_t off) const {
        need(off, 2);
        return little_ ? bytes_[off] | (bytes_[off + 1] << 8) : (bytes_[off] << 8) | bytes_[off + 1];
    }
    std::uint32_t u32(std::size_t off) const {
        need(off, 4);
        const std::uint32_t a = bytes_[off], b = bytes_[off + 1], c = bytes_[off + 2],
                            d = bytes_[off + 3];
        return little_ ? a | (b << 8) | (c << 16) | (d << 24) : (a << 24) | (b << 16) | (c << 8) | d;
    }
    void need(std::size_t off, std::size_t n) const {
        if (off + n > bytes_.size() || off + n < off)
            throw DecodeError("truncated TIFF");
    }

private:
    std::span<const std::uint8_t> bytes_;
    bool little_;
};

struct IfdEntry {
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::size_t value_offset = 0; // where the values live
};

std::uint32_t entry_value(const TiffCursor& cur, const IfdEntry& e, std::uint32_t i) {
    switch (e.type) {
    case 3:
        return cur.u16(e.value_offset + 2 * i);
    case 4:
        return cur.u32(e.value_offset + 4 * i);
    case 1:
        return cur.u8(e.value_offset + i);
    default:
        throw DecodeError("unsupported TIFF field type");
    }
}

void put16(std::vector<std::uint8_t>& v, std::uint16_t x) {
    v.push_back(static_cast<std::uint8_t>(x & 0xff));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
}

void put32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    for (int i = 0; i < 4; ++i)
        v.push_back(static_cast<std::uint8_t>((x >> (8 * i)) & 0xff));
}

} // namespace

std::vector<std::uint8_t> encode_tiff(const Image& img, int bit_depth) {
    check_depth(bit_depth);
    const int w = img.width();
    const int h = img.height();
    const int ch = img.channels();
    const std::size_t bps = bit_depth / 8;
    const std::uint32_t payload = static_cast<std::uint32_t>(static_cast<std::size_t>(w) * h * ch * bps);

    // Layout: header(8) | bits-per-sample array (ch*2) | pixel data | IFD
    std::vector<std::uint8_t> out{'I', 'I', 42, 0};
    const std::uint32_t bits_offset = 8;
    const std::uint32_t data_offset = bits_offset + 2 * ch + (ch % 2 ? 2 : 0);
    const std::uint32_t ifd_offset = data_offset + payload + (payload % 2);
    put32(out, ifd_offset);
    for (int c = 0; c < ch; ++c)
        put16(out, static_cast<std::uint16_t>(bit_depth));
    while (out.size() < data_offset)
        out.push_back(0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                const std::uint16_t q = quantize(img.at(x, y, c), bit_depth);
                if (bps == 2)
                    put16(out, q);
                else
                    out.push_back(static_cast<std::uint8_t>(q));
            }
    while (out.size() < ifd_offset)
        out.push_back(0);

    struct Field {
        std::uint16_t tag, type;
        std::uint32_t count, value;
    };
    const Field fields[] = {
        {kTagWidth, 4, 1, static_cast<std::uint32_t>(w)},
        {kTagHeight, 4, 1, static_cast<std::uint32_t>(h)},
        {kTagBitsPerSample, 3, static_cast<std::uint32_t>(ch),
         ch == 1 ? static_cast<std::uint32_t>(bit_depth) : bits_offset},
        {kTagCompression, 3, 1, 1},
        {kTagPhotometric, 3, 1, ch == 3 ? 2u : 1u},
        {kTagStripOffsets, 4, 1, data_offset},
        {kTagSamplesPerPixel, 3, 1, static_cast<std::uint32_t>(ch)},
        {kTagRowsPerStrip, 4, 1, static_cast<std::uint32_t>(h)},
        {kTagStripByteCounts, 4, 1, payload},
        {kTagPlanarConfig, 3, 1, 1},
    };
    put16(out, static_cast<std::uint16_t>(std::size(fields)));
    for (const auto& f : fields) {
        put16(out, f.tag);
        put16(out, f.type);
        put32(out, f.count);
        if (f.type == 3 && f.count == 1) {
            put16(out, static_cast<std::uint16_t>(f.value));
            put16(out, 0);
        } else {
            put32(out, f.value);
        }
    }
    put32(out, 0);
    return out;
}

Image decode_tiff(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8)
        throw DecodeError("truncated TIFF header");
    bool little;
    if (bytes[0] == 'I' && bytes[1] == 'I')
        little = true;
    else if (bytes[0] == 'M' && bytes[1] == 'M')
        little = false;
    else
        throw DecodeError("not a TIFF stream");
    const TiffCursor cur(bytes, little);
    if (cur.u16(2) != 42)
        throw DecodeError("bad TIFF magic");
    const std::size_t ifd = cur.u32(4);
    const std::uint32_t n = cur.u16(ifd);

    auto find = [&](std::uint16_t tag) -> std::optional<IfdEntry> {
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::size_t e = ifd + 2 + 12 * i;
            if (cur.u16(e) != tag)
                continue;
            IfdEntry entry;
            entry.type = static_cast<std::uint16_t>(cur.u16(e + 2));
            entry.count = cur.u32(e + 4);
            const std::size_t unit = entry.type == 3 ? 2 : entry.type == 4 ? 4 : 1;
            entry.value_offset = unit * entry.count <= 4 ? e + 8 : cur.u32(e + 8);
            return entry;
        }
        return std::nullopt;
    };
    auto scalar = [&](std::uint16_t tag, std::optional<std::uint32_t> fallback) {
        const auto e = find(tag);
        if (!e) {
            if (fallback)
                return *fallback;
            throw DecodeError("missing TIFF tag " + std::to_string(tag));
        }
        return entry_value(cur, *e, 0);
    };

    const std::uint32_t w = scalar(kTagWidth, std::nullopt);
    const std::uint32_t h = scalar(kTagHeight, std::nullopt);
    const std::uint32_t spp = scalar(kTagSamplesPerPixel, 1u);
    const std::uint32_t depth = scalar(kTagBitsPerSample, 1u);
    if (scalar(kTagCompression, 1u) != 1)
        throw DecodeError("compressed TIFF is not supported");
    if (scalar(kTagPlanarConfig, 1u) != 1)
        throw DecodeError("planar TIFF is not supported");
    if (depth != 8 && depth != 16)
        throw DecodeError("unsupported TIFF bit depth " + std::to_string(depth));
    if (spp != 1 && spp != 3)
        throw DecodeError("unsupported TIFF samples per pixel");
    if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16))
        throw DecodeError("invalid TIFF dimensions");
    const std::uint32_t rows_per_strip = scalar(kTagRowsPerStrip, h);
    const auto offsets = find(kTagStripOffsets);
    if (!offsets)
        throw DecodeError("missing TIFF strip offsets");

    const std::size_t bps = depth / 8;
    const std::size_t row_bytes = static_cast<std::size_t>(w) * spp * bps;
    Image img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(spp));
    const float full = depth == 16 ? 65535.0f : 255.0f;
    for (std::uint32_t s = 0; s < offsets->count; ++s) {
        const std::size_t base = entry_value(cur, *offsets, s);
        const std::uint32_t y0 = s * rows_per_strip;
        const std::uint32_t y1 = std::min(h, y0 + rows_per_strip);
        if (y0 >= h)
            break;
        cur.need(base, row_bytes * (y1 - y0));
        for (std::uint32_t y = y0; y < y1; ++y)
            for (std::uint32_t x = 0; x < w; ++x)
                for (std::uint32_t c = 0; c < spp; ++c) {
                    const std::size_t off = base + (y - y0) * row_bytes + (x * spp + c) * bps;
                    const std::uint32_t v = bps == 2 ? cur.u16(off) : bytes[off];
                    img.at(static_cast<int>(x), static_cast<int>(y), static_cast<int>(c)) =
                        static_cast<float>(v) / full;
                }
    }
    if (offsets->count * static_cast<std::uint64_t>(rows_per_strip) < h)
        throw DecodeError("TIFF strips do not cover the image");
    return img;
}

Image read_raster(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0)
        return decode_png(bytes);
    if (bytes.size() >= 4 && ((bytes[0] == 'I' && bytes[1] == 'I') || (bytes[0] == 'M' && bytes[1] == 'M')))
        return decode_tiff(bytes);
    throw DecodeError("unrecognized raster format: " + path.string());
}

void write_raster(const Image& img, const std::filesystem::path& path, int bit_depth) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    std::vector<std::uint8_t> bytes;
    if (ext == ".png")
        bytes = encode_png(img, bit_depth);
    else if (ext == ".tif" || ext == ".tiff")
        bytes = encode_tiff(img, bit_depth);
    else
        throw PreconditionError("unsupported raster extension '" + ext + "'");
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw Error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> pack_u16le(const Image& img) {
    const int ch = img.channels();
    std::vector<std::uint8_t> out(img.plane_size() * ch * 2);
    std::size_t i = 0;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < ch; ++c) {
                const std::uint16_t q = quantize(img.at(x, y, c), 16);
                out[i++] = static_cast<std::uint8_t>(q & 0xff);
                out[i++] = static_cast<std::uint8_t>(q >> 8);
            }
    return out;
}

Image unpack_u16le(std::span<const std::uint8_t> bytes, int width, int height, int channels) {
    Image img(width, height, channels);
    if (bytes.size() != img.plane_size() * channels * 2)
        throw DecodeError("capture payload size mismatch");
    std::size_t i = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c, i += 2)
                img.at(x, y, c) = static_cast<float>(bytes[i] | (bytes[i + 1] << 8)) / 65535.0f;
    return img;
}

} // namespace wsi

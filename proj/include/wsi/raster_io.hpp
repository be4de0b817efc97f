#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wsi/image.hpp"

namespace wsi {

enum class RasterFormat { png, tiff };

/// Reads an 8- or 16-bit gray/RGB PNG or uncompressed TIFF. Integer samples
/// are scaled to [0,1] by the full-scale value of their bit depth.
Image read_raster(const std::filesystem::path& path);

/// Format chosen from the extension (.png, .tif, .tiff). The file is written
/// to a temporary name and renamed into place, so readers never observe a
/// partial file.
void write_raster(const Image& img, const std::filesystem::path& path, int bit_depth = 16);

std::vector<std::uint8_t> encode_png(const Image& img, int bit_depth);
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_tiff(const Image& img, int bit_depth);
Image decode_tiff(std::span<const std::uint8_t> bytes);

/// Interleaved little-endian 16-bit samples, the capture payload layout.
std::vector<std::uint8_t> pack_u16le(const Image& img);
Image unpack_u16le(std::span<const std::uint8_t> bytes, int width, int height, int channels);

} // namespace wsi

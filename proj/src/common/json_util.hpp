#pragma once

#include <filesystem>
#include <string>

namespace wsi::detail {

/// Value rounded to 9 significant decimal digits, so serialized files are
/// stable across save/load cycles.
double round9(double v);

std::string read_text(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace wsi::detail

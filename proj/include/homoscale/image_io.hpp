#pragma once

#include <filesystem>

#include "homoscale/image.hpp"

namespace homoscale {

/// Loads a PNG or binary PPM/PGM image; 8-bit samples map to v / 255.
/// PNG palettes and 16-bit depths are expanded; alpha is dropped.
Image load_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG (grayscale or RGB following the channel count).
void write_png(const std::filesystem::path& path, const Image& img);

/// Masks round-trip as 8-bit grayscale PNGs (0 = invalid, 255 = valid).
void write_mask_png(const std::filesystem::path& path, const ValidityMask& m);
ValidityMask load_mask_png(const std::filesystem::path& path);

}  // namespace homoscale

#pragma once

#include "defence/image.hpp"

#include <filesystem>
#include <span>

namespace defence::imaging {

/// Reads 8/16-bit PNG or binary PGM (P5) / PPM (P6). Values are scaled to
/// [0,1]; gray stays 1 channel, colour becomes 3 (alpha is dropped).
/// Throws IoError ("unreadable file", "unsupported format", ...).
Image load_image(const std::filesystem::path& path);

/// Format follows the extension: .png, .pgm or .ppm. Values are clamped to
/// [0,1] and quantized to bit_depth (8 or 16).
void save_image(const std::filesystem::path& path, const Image& img, int bit_depth = 8);

BinaryMask load_mask(const std::filesystem::path& path);
/// Written as 8-bit PGM/PNG with 255 for true.
void save_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Little-endian PFM. One channel writes "Pf", two or three write "PF"
/// (a two-channel field gets a zero third channel).
void write_pfm(const std::filesystem::path& path, int height, int width, int channels,
               std::span<const double> values);

struct PfmData {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> values; // top row first
};
PfmData read_pfm(const std::filesystem::path& path);

/// Maps values in [lo, hi] onto a blue-to-red ramp; pixels where valid is
/// false render black.
Image false_color(std::span<const double> values, std::span<const std::uint8_t> valid, int height, int width,
                  double lo, double hi);

} // namespace defence::imaging

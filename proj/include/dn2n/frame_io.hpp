#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dn2n/image.hpp"

namespace dn2n {

// Float frame: "DNF1", u32 height, u32 width (little-endian), then
// height*width little-endian binary64 values, row-major.

std::vector<std::uint8_t> encode_float_frame(const Image& im);
Image decode_float_frame(std::span<const std::uint8_t> bytes, PixelDomain domain = PixelDomain::Raw255);

void write_float_frame(const std::filesystem::path& path, const Image& im);
Image read_float_frame(const std::filesystem::path& path, PixelDomain domain = PixelDomain::Raw255);

/// 8-bit binary PGM (P5, maxval 255). Unit images are denormalized with
/// clamping, Raw255 images are clamped; values are then rounded half-to-even.
std::vector<std::uint8_t> encode_pgm(const Image& im);
/// Reads P5 with maxval <= 255 into a Raw255 image (values rescaled to 255 if maxval differs).
Image decode_pgm(std::span<const std::uint8_t> bytes);

void write_pgm(const std::filesystem::path& path, const Image& im);
Image read_pgm(const std::filesystem::path& path);

/// Dispatches on extension: ".pgm" or ".dnf".
Image read_frame(const std::filesystem::path& path);
void write_frame(const std::filesystem::path& path, const Image& im);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dn2n

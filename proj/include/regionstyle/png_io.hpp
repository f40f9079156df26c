#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "regionstyle/mask.hpp"
#include "regionstyle/tensor.hpp"

namespace regionstyle {

/// 8-bit RGB, non-interlaced, libpng default compression. Channel values are
/// quantized as round(v * 255); identical images always yield identical bytes.
std::vector<std::uint8_t> encode_png(const Image& image);

/// Any PNG colour type is converted to 8-bit RGB and scaled to [0,1].
/// Throws BadImage on undecodable input.
Image decode_png(std::span<const std::uint8_t> bytes);

/// 8-bit greyscale, 255 for set pixels.
std::vector<std::uint8_t> encode_mask_png(const Mask& mask);

/// Nonzero grey level means set. Throws BadImage on undecodable input.
Mask decode_mask_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Image load_png(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);
Mask load_mask_png(const std::filesystem::path& path);
void save_mask_png(const Mask& mask, const std::filesystem::path& path);

}  // namespace regionstyle

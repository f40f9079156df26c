#include "regionstyle/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "regionstyle/error.hpp"

namespace regionstyle {
namespace {

std::vector<std::uint8_t> write_simplified(std::uint32_t width, std::uint32_t height,
                                           std::uint32_t format,
                                           const std::vector<std::uint8_t>& pixels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = width;
  image.height = height;
  image.format = format;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("PNG sizing failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("PNG encoding failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> read_simplified(std::span<const std::uint8_t> bytes,
                                          std::uint32_t format, std::uint32_t& width,
                                          std::uint32_t& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || !png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::BadImage, std::string("not a readable PNG: ") +
                                         (bytes.empty() ? "empty input" : image.message));
  }
  image.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::BadImage, "PNG decoding failed: " + message);
  }
  width = image.width;
  height = image.height;
  return pixels;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  auto values = image.values();
  std::vector<std::uint8_t> pixels(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(std::lround(values[i] * 255.0f));
  }
  return write_simplified(static_cast<std::uint32_t>(image.width()),
                          static_cast<std::uint32_t>(image.height()), PNG_FORMAT_RGB, pixels);
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  const auto pixels = read_simplified(bytes, PNG_FORMAT_RGB, width, height);
  std::vector<float> rgb(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) rgb[i] = pixels[i] / 255.0f;
  return Image(height, width, std::move(rgb));
}

std::vector<std::uint8_t> encode_mask_png(const Mask& mask) {
  std::vector<std::uint8_t> pixels(mask.bits().begin(), mask.bits().end());
  for (auto& p : pixels) p = p ? 255 : 0;
  return write_simplified(static_cast<std::uint32_t>(mask.width()),
                          static_cast<std::uint32_t>(mask.height()), PNG_FORMAT_GRAY, pixels);
}

Mask decode_mask_png(std::span<const std::uint8_t> bytes) {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  auto pixels = read_simplified(bytes, PNG_FORMAT_GRAY, width, height);
  return Mask(height, width, std::move(pixels));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

Image load_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

void save_png(const Image& image, const std::filesystem::path& path) {
  write_file(path, encode_png(image));
}

Mask load_mask_png(const std::filesystem::path& path) { return decode_mask_png(read_file(path)); }

void save_mask_png(const Mask& mask, const std::filesystem::path& path) {
  write_file(path, encode_mask_png(mask));
}

}  // namespace regionstyle

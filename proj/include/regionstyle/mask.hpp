#pragma once

// Binary region masks, their reduction to feature resolution, and the
// attention-fusion edit that ties content regions to style regions.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "regionstyle/tensor.hpp"

namespace regionstyle {

/// Pixel-resolution binary mask, row-major, one byte (0/1) per pixel.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t height, std::size_t width, bool fill = false);
  /// Nonzero bytes count as set.
  Mask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

  static Mask full(std::size_t height, std::size_t width) { return Mask(height, width, true); }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  Grid grid() const noexcept { return {height_, width_}; }

  bool test(std::size_t y, std::size_t x) const { return bits_[y * width_ + x] != 0; }
  void set(std::size_t y, std::size_t x, bool on = true) { bits_[y * width_ + x] = on ? 1 : 0; }

  std::size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct MaskPair {
  Mask content;
  Mask style;

  friend bool operator==(const MaskPair&, const MaskPair&) = default;
};

/// Ordered; later pairs take precedence on overlapping content.
using MaskPairSet = std::vector<MaskPair>;

/// Mask at feature-grid resolution.
struct DownsampledMask {
  Grid grid;
  std::vector<std::uint8_t> cells;

  bool test(std::size_t cell) const { return cells[cell] != 0; }
  std::size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }

  static DownsampledMask full(Grid grid) { return {grid, std::vector<std::uint8_t>(grid.cells(), 1)}; }
  static DownsampledMask from_cells(Grid grid, std::initializer_list<std::size_t> on);

  friend bool operator==(const DownsampledMask&, const DownsampledMask&) = default;
};

struct DownsampledPair {
  DownsampledMask content;
  DownsampledMask style;
};

enum class MaskRole { Content, Style };

/// A cell is set iff at least half of its factor x factor pixel block (clipped
/// at the border) is set. GridMismatch when ceil(H/factor) x ceil(W/factor)
/// differs from `grid`; MaskTooSmall when a non-empty style mask vanishes.
DownsampledMask downsample_mask(const Mask& mask, Grid grid, std::size_t factor, MaskRole role);

/// Result of reducing a MaskPairSet to feature resolution.
struct PreparedPairs {
  std::vector<DownsampledPair> pairs;
  std::vector<std::string> warnings;
};

/// Downsamples every pair, checking each mask against its image size
/// (DimMismatch) and rejecting empty style masks (EmptyStyleMask). Pairs whose
/// content mask is empty at feature resolution are dropped with a warning.
/// Errors carry the offending pair index.
PreparedPairs prepare_pairs(const MaskPairSet& pairs, Grid content_image, Grid style_image,
                            Grid content_grid, Grid style_grid, std::size_t factor);

/// Applies the pairs in order. For each pair the selected content rows are
/// first restored to their input values, then every column outside the style
/// mask is set to -inf, so a later pair replaces an earlier one on shared rows.
AttentionMap fuse_attention(const AttentionMap& logits, std::span<const DownsampledPair> pairs);

/// Throws DegenerateRow (with the row index) when a row is entirely -inf.
void validate_fusion(const AttentionMap& logits);

/// Region-aware adaptive instance normalization. Each pair contributes a
/// (mean, std) transform computed over its style cells; content cells take the
/// transform of the last pair that selects them, otherwise the whole-style one.
FeatureMap global_masked_adain(const FeatureMap& content, const FeatureMap& style,
                               std::span<const DownsampledPair> pairs,
                               float eps = kDefaultNormEps);

// --- run-length encoding ------------------------------------------------

/// Row-major runs alternating unset/set, always starting with an unset run
/// (possibly 0).
struct Rle {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> runs;

  friend bool operator==(const Rle&, const Rle&) = default;
};

Rle rle_encode(const Mask& mask);

/// Throws LengthMismatch when the runs do not sum to height * width.
Mask rle_decode(const Rle& rle);

}  // namespace regionstyle

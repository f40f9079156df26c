#pragma once

// Prompt-driven segmentation: labelled points, an optional box and an
// optional contour produce a binary mask. A classical seeded region grower
// stands in for a learned promptable model; see remote_segmenter.hpp for
// delegating to one over HTTP.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "regionstyle/mask.hpp"
#include "regionstyle/tensor.hpp"

namespace regionstyle {

enum class PointLabel : int { Background = 0, Foreground = 1 };

struct PromptPoint {
  int x = 0;
  int y = 0;
  PointLabel label = PointLabel::Foreground;

  friend bool operator==(const PromptPoint&, const PromptPoint&) = default;
};

/// Pixel (x, y) lies inside when x_lt <= x < x_rb and y_lt <= y < y_rb, i.e.
/// when its centre falls inside the rectangle.
struct PromptBox {
  int x_lt = 0;
  int y_lt = 0;
  int x_rb = 0;
  int y_rb = 0;

  bool contains(std::size_t x, std::size_t y) const;
  friend bool operator==(const PromptBox&, const PromptBox&) = default;
};

struct Vertex {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vertex&, const Vertex&) = default;
};

struct PromptSet {
  std::vector<PromptPoint> points;
  std::optional<PromptBox> box;
  std::optional<std::vector<Vertex>> contour;

  friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

struct SegmenterConfig {
  /// Max Euclidean RGB distance between a candidate pixel and the running
  /// mean of the region it would join.
  double tolerance = 0.1;
};

inline constexpr std::string_view kSeedConflictWarning = "SeedConflict";

/// Even-odd scanline fill sampled at pixel centres (x + 0.5, y + 0.5).
/// Vertices outside the grid are fine; the polygon is closed implicitly.
Mask fill_polygon(Grid grid, std::span<const Vertex> polygon);

/// Throws NoForegroundEvidence, OutOfBounds (point or box outside the image)
/// or InvalidPrompt (contour with fewer than 3 vertices). When a foreground
/// seed is removed by background growth, a warning starting with
/// kSeedConflictWarning is appended to `warnings`.
Mask segment(const Image& image, const PromptSet& prompts, const SegmenterConfig& config = {},
             std::vector<std::string>* warnings = nullptr);

/// Segments with `added` appended to `previous`; seeds are processed in
/// prompt order, so a point already covered by the current mask changes nothing.
Mask refine(const Image& image, const PromptSet& previous, const PromptPoint& added,
            const SegmenterConfig& config = {}, std::vector<std::string>* warnings = nullptr);

}  // namespace regionstyle

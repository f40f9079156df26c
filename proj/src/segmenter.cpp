#include "regionstyle/segmenter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <string>

#include "regionstyle/error.hpp"

namespace regionstyle {

bool PromptBox::contains(std::size_t x, std::size_t y) const {
  const auto xi = static_cast<long long>(x);
  const auto yi = static_cast<long long>(y);
  return xi >= x_lt && xi < x_rb && yi >= y_lt && yi < y_rb;
}

Mask fill_polygon(Grid grid, std::span<const Vertex> polygon) {
  Mask mask(grid.height, grid.width);
  const std::size_t n = polygon.size();
  if (n < 3) return mask;
  std::vector<double> crossings;
  for (std::size_t y = 0; y < grid.height; ++y) {
    const double yc = static_cast<double>(y) + 0.5;
    crossings.clear();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Vertex& a = polygon[i];
      const Vertex& b = polygon[j];
      if ((a.y > yc) != (b.y > yc)) {
        crossings.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(crossings.begin(), crossings.end());
    // A centre is inside when an odd number of crossings lie strictly to its
    // right, i.e. xc in [c0, c1), [c2, c3), ...
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const double lo = crossings[k];
      const double hi = crossings[k + 1];
      const double first = std::max(0.0, std::ceil(lo - 0.5));
      for (double x = first; x < static_cast<double>(grid.width); x += 1.0) {
        const double xc = x + 0.5;
        if (xc >= hi) break;
        if (xc >= lo) mask.set(y, static_cast<std::size_t>(x));
      }
    }
  }
  return mask;
}

namespace {

double rgb_distance(const Image& image, std::size_t y, std::size_t x,
                    const std::array<double, 3>& mean) {
  double sum = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double d = image.at(y, x, c) - mean[c];
    sum += d * d;
  }
  return std::sqrt(sum);
}

// Breadth-first growth from one seed. A neighbour joins when its colour is
// within tolerance of the running mean of the pixels admitted so far.
void grow_region(const Image& image, std::size_t seed_x, std::size_t seed_y, double tolerance,
                 std::vector<std::uint8_t>& region, std::vector<std::uint8_t>& visited) {
  const std::size_t w = image.width();
  const std::size_t h = image.height();
  std::fill(visited.begin(), visited.end(), std::uint8_t{0});
  std::array<double, 3> mean{image.at(seed_y, seed_x, 0), image.at(seed_y, seed_x, 1),
                             image.at(seed_y, seed_x, 2)};
  double count = 1.0;
  std::queue<std::size_t> frontier;
  visited[seed_y * w + seed_x] = 1;
  region[seed_y * w + seed_x] = 1;
  frontier.push(seed_y * w + seed_x);
  while (!frontier.empty()) {
    const std::size_t idx = frontier.front();
    frontier.pop();
    const std::size_t y = idx / w;
    const std::size_t x = idx % w;
    const std::array<std::pair<long long, long long>, 4> offsets{
        {{0, -1}, {-1, 0}, {1, 0}, {0, 1}}};
    for (auto [dx, dy] : offsets) {
      const long long nx = static_cast<long long>(x) + dx;
      const long long ny = static_cast<long long>(y) + dy;
      if (nx < 0 || ny < 0 || nx >= static_cast<long long>(w) || ny >= static_cast<long long>(h)) {
        continue;
      }
      const std::size_t nidx = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
      if (visited[nidx]) continue;
      const auto ux = static_cast<std::size_t>(nx);
      const auto uy = static_cast<std::size_t>(ny);
      if (rgb_distance(image, uy, ux, mean) > tolerance) continue;
      visited[nidx] = 1;
      region[nidx] = 1;
      count += 1.0;
      for (std::size_t c = 0; c < 3; ++c) mean[c] += (image.at(uy, ux, c) - mean[c]) / count;
      frontier.push(nidx);
    }
  }
}

std::vector<std::uint8_t> grow_from(const Image& image, const std::vector<PromptPoint>& points,
                                    PointLabel label, double tolerance) {
  const std::size_t w = image.width();
  std::vector<std::uint8_t> grown(image.height() * w, 0);
  std::vector<std::uint8_t> visited(grown.size(), 0);
  for (const auto& p : points) {
    if (p.label != label) continue;
    const auto x = static_cast<std::size_t>(p.x);
    const auto y = static_cast<std::size_t>(p.y);
    if (grown[y * w + x]) continue;
    grow_region(image, x, y, tolerance, grown, visited);
  }
  return grown;
}

void validate_prompts(const Image& image, const PromptSet& prompts) {
  const auto w = static_cast<long long>(image.width());
  const auto h = static_cast<long long>(image.height());
  for (std::size_t i = 0; i < prompts.points.size(); ++i) {
    const auto& p = prompts.points[i];
    if (p.x < 0 || p.y < 0 || p.x >= w || p.y >= h) {
      throw Error(ErrorCode::OutOfBounds, "point (" + std::to_string(p.x) + ", " +
                                              std::to_string(p.y) + ") lies outside the image",
                  i);
    }
    if (p.label != PointLabel::Background && p.label != PointLabel::Foreground) {
      throw Error(ErrorCode::InvalidPrompt, "point label must be 0 or 1", i);
    }
  }
  if (const auto& b = prompts.box) {
    if (b->x_lt >= b->x_rb || b->y_lt >= b->y_rb) {
      throw Error(ErrorCode::InvalidPrompt, "box corners must satisfy lt < rb");
    }
    if (b->x_lt < 0 || b->y_lt < 0 || b->x_rb > w || b->y_rb > h) {
      throw Error(ErrorCode::OutOfBounds, "box exceeds the image");
    }
  }
  if (prompts.contour && prompts.contour->size() < 3) {
    throw Error(ErrorCode::InvalidPrompt, "contour needs at least 3 vertices");
  }
}

}  // namespace

Mask segment(const Image& image, const PromptSet& prompts, const SegmenterConfig& config,
             std::vector<std::string>* warnings) {
  validate_prompts(image, prompts);
  const Grid grid{image.height(), image.width()};

  Mask mask(grid.height, grid.width);
  if (prompts.contour) {
    mask = fill_polygon(grid, *prompts.contour);
  } else {
    const bool has_foreground =
        std::any_of(prompts.points.begin(), prompts.points.end(),
                    [](const PromptPoint& p) { return p.label == PointLabel::Foreground; });
    if (!has_foreground) {
      throw Error(ErrorCode::NoForegroundEvidence,
                  "prompt set needs a foreground point or a contour");
    }
    const auto fg = grow_from(image, prompts.points, PointLabel::Foreground, config.tolerance);
    const auto bg = grow_from(image, prompts.points, PointLabel::Background, config.tolerance);
    for (std::size_t i = 0; i < fg.size(); ++i) {
      if (fg[i] && !bg[i]) mask.set(i / grid.width, i % grid.width);
    }
    if (warnings) {
      for (const auto& p : prompts.points) {
        if (p.label == PointLabel::Foreground &&
            bg[static_cast<std::size_t>(p.y) * grid.width + static_cast<std::size_t>(p.x)]) {
          warnings->push_back(std::string(kSeedConflictWarning) + ": foreground point (" +
                              std::to_string(p.x) + ", " + std::to_string(p.y) +
                              ") was claimed by background growth");
        }
      }
    }
  }

  if (const auto& b = prompts.box) {
    for (std::size_t y = 0; y < grid.height; ++y) {
      for (std::size_t x = 0; x < grid.width; ++x) {
        if (!b->contains(x, y)) mask.set(y, x, false);
      }
    }
  }
  return mask;
}

Mask refine(const Image& image, const PromptSet& previous, const PromptPoint& added,
            const SegmenterConfig& config, std::vector<std::string>* warnings) {
  PromptSet extended = previous;
  extended.points.push_back(added);
  return segment(image, extended, config, warnings);
}

}  // namespace regionstyle

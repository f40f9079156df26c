#include "regionstyle/mask.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "regionstyle/error.hpp"

namespace regionstyle {
namespace {

std::string dims(Grid g) { return std::to_string(g.height) + "x" + std::to_string(g.width); }

void check_grid(const DownsampledMask& mask, std::size_t expected_cells, const char* what) {
  if (mask.cells.size() != expected_cells || mask.grid.cells() != expected_cells) {
    throw Error(ErrorCode::GridMismatch,
                std::string(what) + " mask has " + std::to_string(mask.cells.size()) +
                    " cells, attention expects " + std::to_string(expected_cells));
  }
}

}  // namespace

Mask::Mask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {}

Mask::Mask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  if (bits_.size() != height_ * width_) {
    throw Error(ErrorCode::DimMismatch, "mask buffer does not match " +
                                            dims({height_, width_}));
  }
  for (auto& b : bits_) b = b != 0 ? 1 : 0;
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t DownsampledMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(),
                                                [](std::uint8_t c) { return c != 0; }));
}

DownsampledMask DownsampledMask::from_cells(Grid grid, std::initializer_list<std::size_t> on) {
  DownsampledMask m{grid, std::vector<std::uint8_t>(grid.cells(), 0)};
  for (std::size_t c : on) m.cells.at(c) = 1;
  return m;
}

DownsampledMask downsample_mask(const Mask& mask, Grid grid, std::size_t factor, MaskRole role) {
  if (factor == 0 || (mask.height() + factor - 1) / factor != grid.height ||
      (mask.width() + factor - 1) / factor != grid.width) {
    throw Error(ErrorCode::GridMismatch, "mask " + dims(mask.grid()) + " at factor " +
                                             std::to_string(factor) + " does not tile grid " +
                                             dims(grid));
  }
  DownsampledMask out{grid, std::vector<std::uint8_t>(grid.cells(), 0)};
  for (std::size_t gy = 0; gy < grid.height; ++gy) {
    const std::size_t y1 = std::min((gy + 1) * factor, mask.height());
    for (std::size_t gx = 0; gx < grid.width; ++gx) {
      const std::size_t x1 = std::min((gx + 1) * factor, mask.width());
      std::size_t set = 0;
      std::size_t total = 0;
      for (std::size_t y = gy * factor; y < y1; ++y) {
        for (std::size_t x = gx * factor; x < x1; ++x) {
          set += mask.test(y, x) ? 1 : 0;
          ++total;
        }
      }
      out.cells[gy * grid.width + gx] = 2 * set >= total ? 1 : 0;
    }
  }
  if (role == MaskRole::Style && out.empty() && !mask.empty()) {
    throw Error(ErrorCode::MaskTooSmall,
                "style mask with " + std::to_string(mask.count()) +
                    " pixels covers no feature cell at factor " + std::to_string(factor));
  }
  return out;
}

PreparedPairs prepare_pairs(const MaskPairSet& pairs, Grid content_image, Grid style_image,
                            Grid content_grid, Grid style_grid, std::size_t factor) {
  PreparedPairs prepared;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    try {
      if (pair.content.grid() != content_image) {
        throw Error(ErrorCode::DimMismatch, "content mask " + dims(pair.content.grid()) +
                                                " does not match content image " +
                                                dims(content_image));
      }
      if (pair.style.grid() != style_image) {
        throw Error(ErrorCode::DimMismatch, "style mask " + dims(pair.style.grid()) +
                                                " does not match style image " + dims(style_image));
      }
      if (pair.style.empty()) {
        throw Error(ErrorCode::EmptyStyleMask, "style mask of pair " + std::to_string(i) +
                                                   " selects nothing");
      }
      DownsampledPair reduced{downsample_mask(pair.content, content_grid, factor, MaskRole::Content),
                              downsample_mask(pair.style, style_grid, factor, MaskRole::Style)};
      if (reduced.content.empty()) {
        prepared.warnings.push_back("pair " + std::to_string(i) +
                                    ": content mask covers no feature cell; pair ignored");
        continue;
      }
      prepared.pairs.push_back(std::move(reduced));
    } catch (const Error& e) {
      if (e.index()) throw;
      throw e.with_index(i);
    }
  }
  return prepared;
}

AttentionMap fuse_attention(const AttentionMap& logits, std::span<const DownsampledPair> pairs) {
  AttentionMap fused = logits;
  for (const auto& pair : pairs) {
    check_grid(pair.content, logits.rows(), "content");
    check_grid(pair.style, logits.cols(), "style");
    if (pair.style.empty()) {
      throw Error(ErrorCode::EmptyStyleMask, "style mask selects no attention column");
    }
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      if (!pair.content.test(r)) continue;
      auto original = logits.scores.row(r);
      auto row = fused.scores.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        row[c] = pair.style.test(c) ? original[c] : kNegInf;
      }
    }
  }
  return fused;
}

void validate_fusion(const AttentionMap& logits) {
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.scores.row(r);
    if (std::all_of(row.begin(), row.end(), [](float v) { return v == kNegInf; })) {
      throw Error(ErrorCode::DegenerateRow,
                  "attention row " + std::to_string(r) + " is entirely masked", r);
    }
  }
}

namespace {

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};

ChannelStats style_stats(const FeatureMap& style, const DownsampledMask* region) {
  const std::size_t channels = style.channels();
  ChannelStats s{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
  std::size_t n = 0;
  for (std::size_t p = 0; p < style.positions(); ++p) {
    if (region && !region->test(p)) continue;
    auto row = style.values().row(p);
    for (std::size_t c = 0; c < channels; ++c) s.mean[c] += row[c];
    ++n;
  }
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t p = 0; p < style.positions(); ++p) {
    if (region && !region->test(p)) continue;
    auto row = style.values().row(p);
    for (std::size_t c = 0; c < channels; ++c) {
      const double d = row[c] - s.mean[c];
      s.std[c] += d * d;
    }
  }
  for (double& v : s.std) v = std::sqrt(v / static_cast<double>(n));
  return s;
}

}  // namespace

FeatureMap global_masked_adain(const FeatureMap& content, const FeatureMap& style,
                               std::span<const DownsampledPair> pairs, float eps) {
  if (content.channels() != style.channels()) {
    throw Error(ErrorCode::ChannelMismatch, "content and style features differ in channels");
  }
  std::vector<ChannelStats> bank;
  bank.push_back(style_stats(style, nullptr));
  // 0 selects the whole-style transform, i + 1 selects pair i.
  std::vector<std::size_t> assignment(content.positions(), 0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    try {
      check_grid(pair.content, content.positions(), "content");
      check_grid(pair.style, style.positions(), "style");
      if (pair.content.grid != content.grid() || pair.style.grid != style.grid()) {
        throw Error(ErrorCode::GridMismatch, "mask grid differs from feature grid");
      }
      if (pair.style.empty()) {
        throw Error(ErrorCode::EmptyStyleMask, "style mask selects no feature cell");
      }
    } catch (const Error& e) {
      throw e.with_index(i);
    }
    bank.push_back(style_stats(style, &pair.style));
    for (std::size_t p = 0; p < content.positions(); ++p) {
      if (pair.content.test(p)) assignment[p] = i + 1;
    }
  }

  const FeatureMap normalized = instance_norm(content, eps);
  FeatureMap out(content.grid(), content.channels());
  for (std::size_t p = 0; p < content.positions(); ++p) {
    const auto& stats = bank[assignment[p]];
    auto src = normalized.values().row(p);
    auto dst = out.values().row(p);
    for (std::size_t c = 0; c < dst.size(); ++c) {
      dst[c] = static_cast<float>(stats.std[c] * src[c] + stats.mean[c]);
    }
  }
  return out;
}

Rle rle_encode(const Mask& mask) {
  Rle rle{mask.height(), mask.width(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::uint8_t bit : mask.bits()) {
    if (bit != current) {
      rle.runs.push_back(run);
      current = bit;
      run = 0;
    }
    ++run;
  }
  rle.runs.push_back(run);
  return rle;
}

Mask rle_decode(const Rle& rle) {
  const std::size_t total = rle.height * rle.width;
  std::vector<std::uint8_t> bits;
  bits.reserve(total);
  std::uint8_t current = 0;
  for (std::uint32_t run : rle.runs) {
    if (run > total - bits.size()) {
      throw Error(ErrorCode::LengthMismatch,
                  "runs exceed " + std::to_string(total) + " pixels");
    }
    bits.insert(bits.end(), run, current);
    current ^= 1;
  }
  if (bits.size() != total) {
    throw Error(ErrorCode::LengthMismatch, "runs cover " + std::to_string(bits.size()) +
                                               " of " + std::to_string(total) + " pixels");
  }
  return Mask(rle.height, rle.width, std::move(bits));
}

}  // namespace regionstyle

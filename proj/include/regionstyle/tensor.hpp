#pragma once

// Dense numeric primitives shared by the stylization pipeline. Storage is
// 32-bit float; reductions accumulate in double.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace regionstyle {

inline constexpr float kNegInf = -std::numeric_limits<float>::infinity();
inline constexpr float kDefaultNormEps = 1e-5f;

/// Row-major real matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  float& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> values_;
};

/// H x W x 3 raster, channel-interleaved (RGBRGB...), row-major, values in [0,1].
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width);
  /// Throws BadImage when dimensions are zero, the buffer size is wrong, or a
  /// value lies outside [0,1].
  Image(std::size_t height, std::size_t width, std::vector<float> rgb);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  static constexpr std::size_t channels() noexcept { return 3; }

  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return values_[(y * width_ + x) * 3 + c];
  }
  void set(std::size_t y, std::size_t x, std::size_t c, float v);

  std::span<const float> values() const noexcept { return values_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> values_;
};

struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t cells() const noexcept { return height * width; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

/// (height*width) x channels feature matrix; row index = y*width + x.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(Grid grid, std::size_t channels);
  /// Throws DimensionMismatch if values.rows() != grid.cells().
  FeatureMap(Grid grid, Matrix values);

  Grid grid() const noexcept { return grid_; }
  std::size_t positions() const noexcept { return values_.rows(); }
  std::size_t channels() const noexcept { return values_.cols(); }

  Matrix& values() noexcept { return values_; }
  const Matrix& values() const noexcept { return values_; }

  float& operator()(std::size_t pos, std::size_t c) { return values_(pos, c); }
  float operator()(std::size_t pos, std::size_t c) const { return values_(pos, c); }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  Grid grid_;
  Matrix values_;
};

/// Content-position x style-position scores. Pre-softmax maps may hold
/// kNegInf entries; post-softmax maps are row-stochastic.
struct AttentionMap {
  Matrix scores;

  std::size_t rows() const noexcept { return scores.rows(); }
  std::size_t cols() const noexcept { return scores.cols(); }
  float operator()(std::size_t r, std::size_t c) const { return scores(r, c); }
  float& operator()(std::size_t r, std::size_t c) { return scores(r, c); }

  friend bool operator==(const AttentionMap&, const AttentionMap&) = default;
};

struct Conv1x1Params {
  Matrix weight;             // f_out x f_in
  std::vector<float> bias;   // f_out

  static Conv1x1Params identity(std::size_t channels);
  std::size_t in_channels() const noexcept { return weight.cols(); }
  std::size_t out_channels() const noexcept { return weight.rows(); }

  friend bool operator==(const Conv1x1Params&, const Conv1x1Params&) = default;
};

FeatureMap instance_norm(const FeatureMap& features, float eps = kDefaultNormEps);

/// out[pos, j] = sum_i weight[j, i] * F[pos, i] + bias[j].
FeatureMap conv1x1(const FeatureMap& features, const Conv1x1Params& params);

Matrix matmul(const Matrix& a, const Matrix& b);

/// a * b^T without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// Numerically stable row softmax; kNegInf entries map to exactly 0.
/// Throws DegenerateRow (with the row index) for an all -inf row.
AttentionMap softmax_rows(const AttentionMap& logits);

}  // namespace regionstyle

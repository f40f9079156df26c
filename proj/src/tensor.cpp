#include "regionstyle/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "regionstyle/error.hpp"

namespace regionstyle {

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch,
                "matrix buffer holds " + std::to_string(values_.size()) +
                    " values, expected " + std::to_string(rows * cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

Image::Image(std::size_t height, std::size_t width)
    : Image(height, width, std::vector<float>(height * width * 3, 0.0f)) {}

Image::Image(std::size_t height, std::size_t width, std::vector<float> rgb)
    : height_(height), width_(width), values_(std::move(rgb)) {
  if (height_ == 0 || width_ == 0) {
    throw Error(ErrorCode::BadImage, "image dimensions must be positive");
  }
  if (values_.size() != height_ * width_ * 3) {
    throw Error(ErrorCode::BadImage, "image buffer size does not match dimensions");
  }
  for (float v : values_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::BadImage, "image value outside [0,1]");
    }
  }
}

void Image::set(std::size_t y, std::size_t x, std::size_t c, float v) {
  if (!(v >= 0.0f && v <= 1.0f)) {
    throw Error(ErrorCode::BadImage, "image value outside [0,1]");
  }
  values_[(y * width_ + x) * 3 + c] = v;
}

FeatureMap::FeatureMap(Grid grid, std::size_t channels)
    : grid_(grid), values_(grid.cells(), channels) {}

FeatureMap::FeatureMap(Grid grid, Matrix values) : grid_(grid), values_(std::move(values)) {
  if (values_.rows() != grid_.cells()) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature rows " + std::to_string(values_.rows()) + " != grid cells " +
                    std::to_string(grid_.cells()));
  }
}

Conv1x1Params Conv1x1Params::identity(std::size_t channels) {
  return {Matrix::identity(channels), std::vector<float>(channels, 0.0f)};
}

FeatureMap instance_norm(const FeatureMap& features, float eps) {
  const std::size_t n = features.positions();
  const std::size_t channels = features.channels();
  FeatureMap out(features.grid(), channels);
  if (n == 0) return out;

  std::vector<double> mean(channels, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    auto row = features.values().row(p);
    for (std::size_t c = 0; c < channels; ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= static_cast<double>(n);

  std::vector<double> var(channels, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    auto row = features.values().row(p);
    for (std::size_t c = 0; c < channels; ++c) {
      const double d = row[c] - mean[c];
      var[c] += d * d;
    }
  }
  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    inv_std[c] = 1.0 / std::sqrt(var[c] / static_cast<double>(n) + eps);
  }

  for (std::size_t p = 0; p < n; ++p) {
    auto src = features.values().row(p);
    auto dst = out.values().row(p);
    for (std::size_t c = 0; c < channels; ++c) {
      dst[c] = static_cast<float>((src[c] - mean[c]) * inv_std[c]);
    }
  }
  return out;
}

FeatureMap conv1x1(const FeatureMap& features, const Conv1x1Params& params) {
  if (params.in_channels() != features.channels()) {
    throw Error(ErrorCode::ChannelMismatch,
                "1x1 conv expects " + std::to_string(params.in_channels()) +
                    " channels, feature map has " + std::to_string(features.channels()));
  }
  if (params.bias.size() != params.out_channels()) {
    throw Error(ErrorCode::ChannelMismatch, "1x1 conv bias length differs from output channels");
  }
  Matrix projected = matmul_transposed(features.values(), params.weight);
  for (std::size_t p = 0; p < projected.rows(); ++p) {
    auto row = projected.row(p);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += params.bias[j];
  }
  return FeatureMap(features.grid(), std::move(projected));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::DimensionMismatch,
                "matmul inner dimensions " + std::to_string(a.cols()) + " and " +
                    std::to_string(b.rows()));
  }
  Matrix out(a.rows(), b.cols());
  std::vector<double> acc(b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < brow.size(); ++j) acc[j] += aik * brow[j];
    }
    auto orow = out.row(i);
    for (std::size_t j = 0; j < orow.size(); ++j) orow[j] = static_cast<float>(acc[j]);
  }
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "matmul_transposed inner dimensions " + std::to_string(a.cols()) + " and " +
                    std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < arow.size(); ++k) {
        acc += static_cast<double>(arow[k]) * brow[k];
      }
      out(i, j) = static_cast<float>(acc);
    }
  }
  return out;
}

AttentionMap softmax_rows(const AttentionMap& logits) {
  AttentionMap out{Matrix(logits.rows(), logits.cols())};
  std::vector<double> exps(logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.scores.row(r);
    float row_max = kNegInf;
    for (float v : in) {
      if (std::isfinite(v)) row_max = std::max(row_max, v);
    }
    if (row_max == kNegInf) {
      throw Error(ErrorCode::DegenerateRow,
                  "attention row " + std::to_string(r) + " has no finite entry", r);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      exps[c] = in[c] == kNegInf ? 0.0 : std::exp(static_cast<double>(in[c]) - row_max);
      sum += exps[c];
    }
    auto dst = out.scores.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = static_cast<float>(exps[c] / sum);
    }
  }
  return out;
}

}  // namespace regionstyle

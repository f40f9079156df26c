#include "regionstyle/stylizer.hpp"

#include <cmath>
#include <string>

#include "regionstyle/error.hpp"

namespace regionstyle {

QueryKeyValue project_qkv(const FeatureMap& content, const FeatureMap& style,
                          const ModelParams& params) {
  return {conv1x1(instance_norm(content), params.query),
          conv1x1(instance_norm(style), params.key),
          conv1x1(style, params.value)};
}

AttentionMap raw_attention(const FeatureMap& query, const FeatureMap& key) {
  if (query.channels() != key.channels()) {
    throw Error(ErrorCode::ChannelMismatch,
                "query has " + std::to_string(query.channels()) + " channels, key has " +
                    std::to_string(key.channels()));
  }
  return AttentionMap{matmul_transposed(query.values(), key.values())};
}

AttentionStats adaattn_statistics(const AttentionMap& attention, const FeatureMap& value) {
  if (attention.cols() != value.positions()) {
    throw Error(ErrorCode::DimensionMismatch,
                "attention has " + std::to_string(attention.cols()) + " columns, value has " +
                    std::to_string(value.positions()) + " positions");
  }
  const std::size_t rows = attention.rows();
  const std::size_t channels = value.channels();
  AttentionStats stats{Matrix(rows, channels), Matrix(rows, channels)};
  std::vector<double> first(channels);
  std::vector<double> second(channels);
  for (std::size_t p = 0; p < rows; ++p) {
    std::fill(first.begin(), first.end(), 0.0);
    std::fill(second.begin(), second.end(), 0.0);
    auto weights = attention.scores.row(p);
    for (std::size_t q = 0; q < weights.size(); ++q) {
      const double w = weights[q];
      if (w == 0.0) continue;
      auto v = value.values().row(q);
      for (std::size_t c = 0; c < channels; ++c) first[c] += w * v[c];
    }
    // Centred second moment; equal to A(V*V) - M*M for row-stochastic A.
    for (std::size_t q = 0; q < weights.size(); ++q) {
      const double w = weights[q];
      if (w == 0.0) continue;
      auto v = value.values().row(q);
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = v[c] - first[c];
        second[c] += w * d * d;
      }
    }
    auto mean = stats.mean.row(p);
    auto sd = stats.std.row(p);
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = static_cast<float>(first[c]);
      sd[c] = static_cast<float>(std::sqrt(std::max(0.0, second[c])));
    }
  }
  return stats;
}

FeatureMap stylize_feature(const FeatureMap& content, const AttentionStats& stats, float eps) {
  if (stats.mean.rows() != content.positions() || stats.mean.cols() != content.channels() ||
      stats.std.rows() != content.positions() || stats.std.cols() != content.channels()) {
    throw Error(ErrorCode::DimensionMismatch, "statistics do not match the content feature grid");
  }
  FeatureMap out = instance_norm(content, eps);
  for (std::size_t p = 0; p < out.positions(); ++p) {
    auto row = out.values().row(p);
    auto mean = stats.mean.row(p);
    auto sd = stats.std.row(p);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = sd[c] * row[c] + mean[c];
  }
  return out;
}

StylizeResult stylize_with_report(const Image& content, const Image& style,
                                  const MaskPairSet& pairs, const ModelParams& params) {
  const FeatureMap content_features = encode(content, params.encoder);
  const FeatureMap style_features = encode(style, params.encoder);
  const auto qkv = project_qkv(content_features, style_features, params);
  AttentionMap logits = raw_attention(qkv.query, qkv.key);

  StylizeResult result;
  if (!pairs.empty()) {
    auto prepared = prepare_pairs(pairs, {content.height(), content.width()},
                                  {style.height(), style.width()}, content_features.grid(),
                                  style_features.grid(), params.encoder.downsampling());
    logits = fuse_attention(logits, prepared.pairs);
    validate_fusion(logits);
    result.warnings = std::move(prepared.warnings);
  }
  const AttentionMap attention = softmax_rows(logits);
  const AttentionStats stats = adaattn_statistics(attention, qkv.value);
  const FeatureMap stylized = stylize_feature(content_features, stats);
  result.image = decode(stylized, params.decoder, {content.height(), content.width()});
  return result;
}

Image stylize(const Image& content, const Image& style, const MaskPairSet& pairs,
              const ModelParams& params) {
  return stylize_with_report(content, style, pairs, params).image;
}

}  // namespace regionstyle

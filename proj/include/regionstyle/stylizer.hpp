#pragma once

// Attention-based statistics transfer with region-pair control.

#include <string>
#include <vector>

#include "regionstyle/codec.hpp"
#include "regionstyle/mask.hpp"
#include "regionstyle/tensor.hpp"

namespace regionstyle {

struct QueryKeyValue {
  FeatureMap query;
  FeatureMap key;
  FeatureMap value;
};

/// Attention-weighted per-position mean and standard deviation of the values.
struct AttentionStats {
  Matrix mean;
  Matrix std;
};

/// Q = g_q(IN(F_c)), K = g_k(IN(F_s)), V = g_v(F_s). V uses the raw style features.
QueryKeyValue project_qkv(const FeatureMap& content, const FeatureMap& style,
                          const ModelParams& params);

/// Unscaled dot-product scores Q K^T.
AttentionMap raw_attention(const FeatureMap& query, const FeatureMap& key);

/// mean = A V, std = sqrt(max(0, A (V*V) - mean*mean)).
AttentionStats adaattn_statistics(const AttentionMap& attention, const FeatureMap& value);

/// F_cs = std * IN(F_c) + mean.
FeatureMap stylize_feature(const FeatureMap& content, const AttentionStats& stats,
                           float eps = kDefaultNormEps);

struct StylizeResult {
  Image image;
  std::vector<std::string> warnings;
};

/// encode -> project -> attention -> fusion (when pairs are given) -> softmax
/// -> statistics -> stylized feature -> decode at the content image size.
StylizeResult stylize_with_report(const Image& content, const Image& style,
                                  const MaskPairSet& pairs, const ModelParams& params);

Image stylize(const Image& content, const Image& style, const MaskPairSet& pairs,
              const ModelParams& params);

}  // namespace regionstyle

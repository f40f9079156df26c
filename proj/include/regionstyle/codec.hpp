#pragma once

// Convolutional encoder/decoder pair and the NSTW weight container.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "regionstyle/tensor.hpp"

namespace regionstyle {

/// k x k convolution, stride 1, reflection padding of k/2. Weights are laid
/// out [out][in][ky][kx] so published checkpoints convert without reordering.
struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::vector<float> weight;
  std::vector<float> bias;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct ReluLayer {
  friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};

/// 2x2 window, stride 2, ceil mode (a trailing odd row/column forms its own window).
struct MaxPoolLayer {
  friend bool operator==(const MaxPoolLayer&, const MaxPoolLayer&) = default;
};

/// Nearest-neighbour 2x upsampling.
struct UpsampleLayer {
  friend bool operator==(const UpsampleLayer&, const UpsampleLayer&) = default;
};

using EncoderLayer = std::variant<ConvLayer, ReluLayer, MaxPoolLayer>;
using DecoderLayer = std::variant<ConvLayer, ReluLayer, UpsampleLayer>;

struct EncoderParams {
  std::vector<EncoderLayer> layers;

  /// Total spatial reduction d (2 per pooling stage).
  std::size_t downsampling() const;
  std::size_t output_channels() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct DecoderParams {
  std::vector<DecoderLayer> layers;

  std::size_t upsampling() const;
  std::size_t input_channels() const;
  std::size_t output_channels() const;

  friend bool operator==(const DecoderParams&, const DecoderParams&) = default;
};

struct ModelParams {
  EncoderParams encoder;
  DecoderParams decoder;
  Conv1x1Params query;
  Conv1x1Params key;
  Conv1x1Params value;
  std::uint32_t seed = 0;

  /// Throws ShapeError when layer channel counts do not chain, the decoder
  /// does not mirror the encoder's scale, or a weight is non-finite.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Zero conv layers, d = 1, f = 3, identity projections.
ModelParams identity_model();

/// Two conv+relu+pool stages (d = 4, f = 16) with seeded weights.
ModelParams toy_model(std::uint32_t seed = 1234);

/// VGG-19 topology up to relu4_1 (d = 8, f = 512) and its mirrored decoder,
/// filled with seeded weights. Real checkpoints are converted into this shape.
ModelParams vgg19_relu4_1_model(std::uint32_t seed = 1234);

/// Throws ImageTooSmall when either side is smaller than the downsampling factor.
FeatureMap encode(const Image& image, const EncoderParams& params);

/// Runs the decoder, crops the top-left target region and clamps to [0,1].
/// Throws ChannelMismatch when feature channels differ from the decoder input.
Image decode(const FeatureMap& features, const DecoderParams& params, Grid target);

// Building blocks, exposed for tests.
FeatureMap conv2d(const FeatureMap& input, const ConvLayer& layer);
FeatureMap relu(FeatureMap input);
FeatureMap maxpool2x2(const FeatureMap& input);
FeatureMap upsample2x(const FeatureMap& input);

// --- NSTW v1 -------------------------------------------------------------

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Serializes tensors as: "NSTW", u32 version, u32 count, then per tensor
/// u16 name length, name bytes, u8 rank, rank x u32 dims, f32 data; followed
/// by a CRC-32 of everything before it. All integers little-endian.
std::vector<std::uint8_t> encode_nstw(std::span<const NamedTensor> tensors);

/// Inverse of encode_nstw. FormatError for bad magic/version or a truncated
/// stream, ShapeError when the checksum is intact but a tensor's declared
/// size disagrees with the payload, ChecksumError when only the CRC is off.
std::vector<NamedTensor> decode_nstw(std::span<const std::uint8_t> bytes);

std::vector<NamedTensor> model_to_tensors(const ModelParams& params);
ModelParams model_from_tensors(const std::vector<NamedTensor>& tensors);

void save_weights(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_weights(const std::filesystem::path& path);

}  // namespace regionstyle

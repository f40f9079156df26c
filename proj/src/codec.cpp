#include "regionstyle/codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <string>

#include "regionstyle/error.hpp"

namespace regionstyle {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  while (i < 0 || i > last) {
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
  }
  return static_cast<std::size_t>(i);
}

// Uniform weights from raw mt19937 output so files are identical across
// standard libraries.
class WeightRng {
 public:
  explicit WeightRng(std::uint32_t seed) : gen_(seed) {}
  float uniform(float bound) {
    const float unit = static_cast<float>(gen_() >> 8) * (1.0f / 16777216.0f);
    return (2.0f * unit - 1.0f) * bound;
  }

 private:
  std::mt19937 gen_;
};

ConvLayer make_conv(WeightRng& rng, std::size_t in, std::size_t out, std::size_t k,
                    float gain = 1.0f, float bias = 0.0f) {
  ConvLayer conv{in, out, k, std::vector<float>(out * in * k * k), std::vector<float>(out, bias)};
  const float bound = gain * std::sqrt(6.0f / static_cast<float>(in * k * k));
  for (float& w : conv.weight) w = rng.uniform(bound);
  return conv;
}

Conv1x1Params make_projection(WeightRng& rng, std::size_t channels) {
  Conv1x1Params p{Matrix(channels, channels), std::vector<float>(channels, 0.0f)};
  const float bound = std::sqrt(3.0f / static_cast<float>(channels));
  for (float& w : p.weight.values()) w = rng.uniform(bound);
  return p;
}

}  // namespace

// --- parameter shapes ----------------------------------------------------

std::size_t EncoderParams::downsampling() const {
  std::size_t d = 1;
  for (const auto& layer : layers) {
    if (std::holds_alternative<MaxPoolLayer>(layer)) d *= 2;
  }
  return d;
}

std::size_t EncoderParams::output_channels() const {
  std::size_t channels = 3;
  for (const auto& layer : layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) channels = conv->out_channels;
  }
  return channels;
}

std::size_t DecoderParams::upsampling() const {
  std::size_t u = 1;
  for (const auto& layer : layers) {
    if (std::holds_alternative<UpsampleLayer>(layer)) u *= 2;
  }
  return u;
}

std::size_t DecoderParams::input_channels() const {
  for (const auto& layer : layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) return conv->in_channels;
  }
  return 3;
}

std::size_t DecoderParams::output_channels() const {
  std::size_t channels = input_channels();
  for (const auto& layer : layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) channels = conv->out_channels;
  }
  return channels;
}

namespace {

void check_conv(const ConvLayer& conv, std::size_t expected_in, const std::string& where) {
  if (conv.in_channels != expected_in) {
    throw Error(ErrorCode::ShapeError, where + " expects " + std::to_string(conv.in_channels) +
                                           " input channels, previous layer yields " +
                                           std::to_string(expected_in));
  }
  if (conv.kernel == 0 || conv.kernel % 2 == 0) {
    throw Error(ErrorCode::ShapeError, where + " kernel size must be odd");
  }
  if (conv.weight.size() != conv.out_channels * conv.in_channels * conv.kernel * conv.kernel ||
      conv.bias.size() != conv.out_channels) {
    throw Error(ErrorCode::ShapeError, where + " weight/bias sizes disagree with its shape");
  }
  auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(conv.weight.begin(), conv.weight.end(), finite) ||
      !std::all_of(conv.bias.begin(), conv.bias.end(), finite)) {
    throw Error(ErrorCode::ShapeError, where + " has non-finite weights");
  }
}

void check_projection(const Conv1x1Params& p, std::size_t channels, const std::string& name) {
  if (p.in_channels() != channels || p.out_channels() != channels ||
      p.bias.size() != channels) {
    throw Error(ErrorCode::ShapeError, name + " projection must be " + std::to_string(channels) +
                                           "x" + std::to_string(channels));
  }
  auto values = p.weight.values();
  if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); }) ||
      !std::all_of(p.bias.begin(), p.bias.end(), [](float v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::ShapeError, name + " projection has non-finite weights");
  }
}

}  // namespace

void ModelParams::validate() const {
  std::size_t channels = 3;
  for (std::size_t i = 0; i < encoder.layers.size(); ++i) {
    if (const auto* conv = std::get_if<ConvLayer>(&encoder.layers[i])) {
      check_conv(*conv, channels, "encoder layer " + std::to_string(i));
      channels = conv->out_channels;
    }
  }
  const std::size_t f = channels;
  check_projection(query, f, "query");
  check_projection(key, f, "key");
  check_projection(value, f, "value");

  for (std::size_t i = 0; i < decoder.layers.size(); ++i) {
    if (const auto* conv = std::get_if<ConvLayer>(&decoder.layers[i])) {
      check_conv(*conv, channels, "decoder layer " + std::to_string(i));
      channels = conv->out_channels;
    }
  }
  if (channels != 3) {
    throw Error(ErrorCode::ShapeError, "decoder must end with 3 channels");
  }
  if (decoder.upsampling() != encoder.downsampling()) {
    throw Error(ErrorCode::ShapeError, "decoder upsampling does not mirror encoder downsampling");
  }
}

ModelParams identity_model() {
  ModelParams m;
  m.query = Conv1x1Params::identity(3);
  m.key = Conv1x1Params::identity(3);
  m.value = Conv1x1Params::identity(3);
  return m;
}

ModelParams toy_model(std::uint32_t seed) {
  WeightRng rng(seed);
  ModelParams m;
  m.seed = seed;
  m.encoder.layers = {make_conv(rng, 3, 8, 3), ReluLayer{}, MaxPoolLayer{},
                      make_conv(rng, 8, 16, 3), ReluLayer{}, MaxPoolLayer{}};
  m.query = make_projection(rng, 16);
  m.key = make_projection(rng, 16);
  m.value = make_projection(rng, 16);
  m.decoder.layers = {UpsampleLayer{}, make_conv(rng, 16, 8, 3), ReluLayer{},
                      UpsampleLayer{}, make_conv(rng, 8, 3, 3, 0.1f, 0.5f)};
  return m;
}

ModelParams vgg19_relu4_1_model(std::uint32_t seed) {
  WeightRng rng(seed);
  ModelParams m;
  m.seed = seed;
  auto& enc = m.encoder.layers;
  auto conv_relu = [&](std::vector<EncoderLayer>& dst, std::size_t in, std::size_t out) {
    dst.emplace_back(make_conv(rng, in, out, 3));
    dst.emplace_back(ReluLayer{});
  };
  conv_relu(enc, 3, 64);
  conv_relu(enc, 64, 64);
  enc.emplace_back(MaxPoolLayer{});
  conv_relu(enc, 64, 128);
  conv_relu(enc, 128, 128);
  enc.emplace_back(MaxPoolLayer{});
  conv_relu(enc, 128, 256);
  for (int i = 0; i < 3; ++i) conv_relu(enc, 256, 256);
  enc.emplace_back(MaxPoolLayer{});
  conv_relu(enc, 256, 512);

  m.query = make_projection(rng, 512);
  m.key = make_projection(rng, 512);
  m.value = make_projection(rng, 512);

  auto& dec = m.decoder.layers;
  auto dconv_relu = [&](std::size_t in, std::size_t out) {
    dec.emplace_back(make_conv(rng, in, out, 3));
    dec.emplace_back(ReluLayer{});
  };
  dconv_relu(512, 256);
  dec.emplace_back(UpsampleLayer{});
  for (int i = 0; i < 3; ++i) dconv_relu(256, 256);
  dconv_relu(256, 128);
  dec.emplace_back(UpsampleLayer{});
  dconv_relu(128, 128);
  dconv_relu(128, 64);
  dec.emplace_back(UpsampleLayer{});
  dconv_relu(64, 64);
  dec.emplace_back(make_conv(rng, 64, 3, 3, 0.1f, 0.5f));
  return m;
}

// --- layers --------------------------------------------------------------

FeatureMap conv2d(const FeatureMap& input, const ConvLayer& layer) {
  if (input.channels() != layer.in_channels) {
    throw Error(ErrorCode::ChannelMismatch,
                "conv expects " + std::to_string(layer.in_channels) + " channels, got " +
                    std::to_string(input.channels()));
  }
  const std::size_t k = layer.kernel;
  const std::size_t cin = layer.in_channels;
  const std::size_t patch = k * k * cin;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const Grid grid = input.grid();

  // Reorder [out][in][ky][kx] to [out][ky][kx][in] to match the patch layout.
  std::vector<float> kernel(layer.out_channels * patch);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    for (std::size_t i = 0; i < cin; ++i) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          kernel[o * patch + (ky * k + kx) * cin + i] =
              layer.weight[((o * cin + i) * k + ky) * k + kx];
        }
      }
    }
  }

  FeatureMap out(grid, layer.out_channels);
  std::vector<float> buffer(patch);
  for (std::size_t y = 0; y < grid.height; ++y) {
    for (std::size_t x = 0; x < grid.width; ++x) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::size_t sy =
            reflect(static_cast<std::ptrdiff_t>(y + ky) - pad, grid.height);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t sx =
              reflect(static_cast<std::ptrdiff_t>(x + kx) - pad, grid.width);
          auto src = input.values().row(sy * grid.width + sx);
          std::copy(src.begin(), src.end(), buffer.begin() + (ky * k + kx) * cin);
        }
      }
      auto dst = out.values().row(y * grid.width + x);
      for (std::size_t o = 0; o < layer.out_channels; ++o) {
        const float* w = kernel.data() + o * patch;
        double acc = layer.bias[o];
        for (std::size_t j = 0; j < patch; ++j) acc += static_cast<double>(w[j]) * buffer[j];
        dst[o] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

FeatureMap relu(FeatureMap input) {
  for (float& v : input.values().values()) v = std::max(v, 0.0f);
  return input;
}

FeatureMap maxpool2x2(const FeatureMap& input) {
  const Grid in = input.grid();
  const Grid grid{(in.height + 1) / 2, (in.width + 1) / 2};
  FeatureMap out(grid, input.channels());
  for (std::size_t y = 0; y < grid.height; ++y) {
    for (std::size_t x = 0; x < grid.width; ++x) {
      auto dst = out.values().row(y * grid.width + x);
      std::fill(dst.begin(), dst.end(), kNegInf);
      for (std::size_t sy = 2 * y; sy < std::min(2 * y + 2, in.height); ++sy) {
        for (std::size_t sx = 2 * x; sx < std::min(2 * x + 2, in.width); ++sx) {
          auto src = input.values().row(sy * in.width + sx);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = std::max(dst[c], src[c]);
        }
      }
    }
  }
  return out;
}

FeatureMap upsample2x(const FeatureMap& input) {
  const Grid in = input.grid();
  const Grid grid{in.height * 2, in.width * 2};
  FeatureMap out(grid, input.channels());
  for (std::size_t y = 0; y < grid.height; ++y) {
    for (std::size_t x = 0; x < grid.width; ++x) {
      auto src = input.values().row((y / 2) * in.width + x / 2);
      auto dst = out.values().row(y * grid.width + x);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return out;
}

FeatureMap encode(const Image& image, const EncoderParams& params) {
  const std::size_t d = params.downsampling();
  if (image.height() < d || image.width() < d) {
    throw Error(ErrorCode::ImageTooSmall,
                "image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                    " is smaller than the encoder factor " + std::to_string(d));
  }
  const Grid grid{image.height(), image.width()};
  auto pixels = image.values();
  FeatureMap features(grid, Matrix(grid.cells(), 3, std::vector<float>(pixels.begin(), pixels.end())));
  for (const auto& layer : params.layers) {
    features = std::visit(Overloaded{
                              [&](const ConvLayer& conv) { return conv2d(features, conv); },
                              [&](const ReluLayer&) { return relu(std::move(features)); },
                              [&](const MaxPoolLayer&) { return maxpool2x2(features); },
                          },
                          layer);
  }
  return features;
}

Image decode(const FeatureMap& features, const DecoderParams& params, Grid target) {
  if (features.channels() != params.input_channels()) {
    throw Error(ErrorCode::ChannelMismatch,
                "decoder expects " + std::to_string(params.input_channels()) +
                    " channels, got " + std::to_string(features.channels()));
  }
  FeatureMap x = features;
  for (const auto& layer : params.layers) {
    x = std::visit(Overloaded{
                       [&](const ConvLayer& conv) { return conv2d(x, conv); },
                       [&](const ReluLayer&) { return relu(std::move(x)); },
                       [&](const UpsampleLayer&) { return upsample2x(x); },
                   },
                   layer);
  }
  if (x.channels() != 3) {
    throw Error(ErrorCode::ChannelMismatch, "decoder does not produce 3 channels");
  }
  const Grid produced = x.grid();
  if (produced.height < target.height || produced.width < target.width) {
    throw Error(ErrorCode::DimensionMismatch,
                "decoded " + std::to_string(produced.height) + "x" +
                    std::to_string(produced.width) + " cannot cover target " +
                    std::to_string(target.height) + "x" + std::to_string(target.width));
  }
  std::vector<float> rgb(target.cells() * 3);
  for (std::size_t y = 0; y < target.height; ++y) {
    for (std::size_t xx = 0; xx < target.width; ++xx) {
      auto src = x.values().row(y * produced.width + xx);
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = src[c];
        rgb[(y * target.width + xx) * 3 + c] = v > 0.0f ? std::min(v, 1.0f) : 0.0f;
      }
    }
  }
  return Image(target.height, target.width, std::move(rgb));
}

// --- NSTW ----------------------------------------------------------------

namespace {

constexpr std::uint32_t kNstwVersion = 1;
constexpr std::size_t kHeaderBytes = 12;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

struct Overrun {};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::size_t remaining() const { return end_ - pos_; }
  std::size_t position() const { return pos_; }

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    auto b = take(4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) throw Overrun{};
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_nstw(std::span<const NamedTensor> tensors) {
  ByteWriter w;
  w.raw("NSTW");
  w.u32(kNstwVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) {
      throw Error(ErrorCode::FormatError, "tensor name too long: " + t.name.substr(0, 32));
    }
    if (t.dims.size() > 0xff) {
      throw Error(ErrorCode::FormatError, "tensor rank exceeds 255: " + t.name);
    }
    std::size_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.values.size()) {
      throw Error(ErrorCode::ShapeError, "tensor " + t.name + " dims disagree with its data");
    }
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.values) w.f32(v);
  }
  const std::uint32_t crc = crc32_of(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

std::vector<NamedTensor> decode_nstw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes + 4) {
    throw Error(ErrorCode::FormatError, "file too short for an NSTW header");
  }
  if (std::memcmp(bytes.data(), "NSTW", 4) != 0) {
    throw Error(ErrorCode::FormatError, "bad magic");
  }
  const std::size_t payload_end = bytes.size() - 4;
  ByteReader trailer(bytes.subspan(payload_end), 4);
  const std::uint32_t stored_crc = trailer.u32();
  const bool crc_ok = crc32_of(bytes.first(payload_end)) == stored_crc;

  ByteReader r(bytes, payload_end);
  r.take(4);
  const std::uint32_t version = r.u32();
  if (version != kNstwVersion) {
    throw Error(ErrorCode::FormatError, "unsupported NSTW version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();

  // A short or over-long payload under a valid checksum means the header
  // itself declares the wrong sizes; under a broken checksum it is truncation.
  auto size_error = [&](const std::string& what) {
    return crc_ok ? Error(ErrorCode::ShapeError, what)
                  : Error(ErrorCode::FormatError, "truncated file: " + what);
  };

  std::vector<NamedTensor> tensors;
  std::string current = "<header>";
  try {
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedTensor t;
      const std::uint16_t name_len = r.u16();
      auto name = r.take(name_len);
      t.name.assign(name.begin(), name.end());
      current = t.name;
      const std::uint8_t rank = r.u8();
      std::size_t elements = 1;
      bool saturated = false;
      for (std::uint8_t d = 0; d < rank; ++d) {
        t.dims.push_back(r.u32());
        const std::size_t dim = t.dims.back();
        if (dim == 0) {
          elements = 0;
          saturated = false;
        } else if (elements != 0 && elements > (std::size_t{1} << 40) / dim) {
          saturated = true;
        } else {
          elements *= dim;
        }
      }
      if (saturated || elements > r.remaining() / 4) throw Overrun{};
      t.values.resize(elements);
      auto data = r.take(elements * 4);
      for (std::size_t e = 0; e < elements; ++e) {
        const std::uint32_t bits = static_cast<std::uint32_t>(data[4 * e]) |
                                   (static_cast<std::uint32_t>(data[4 * e + 1]) << 8) |
                                   (static_cast<std::uint32_t>(data[4 * e + 2]) << 16) |
                                   (static_cast<std::uint32_t>(data[4 * e + 3]) << 24);
        t.values[e] = std::bit_cast<float>(bits);
      }
      tensors.push_back(std::move(t));
    }
  } catch (const Overrun&) {
    throw size_error("tensor '" + current + "' extends past the end of the data");
  }
  if (r.remaining() != 0) {
    throw size_error(std::to_string(r.remaining()) + " bytes beyond the declared tensors");
  }
  if (!crc_ok) {
    throw Error(ErrorCode::ChecksumError, "CRC-32 mismatch");
  }
  return tensors;
}

namespace {

enum LayerCode : int { kConv = 0, kRelu = 1, kPool = 2, kUpsample = 3 };

void push_conv(std::vector<NamedTensor>& out, const std::string& prefix, const ConvLayer& c) {
  out.push_back({prefix + ".weight",
                 {static_cast<std::uint32_t>(c.out_channels), static_cast<std::uint32_t>(c.in_channels),
                  static_cast<std::uint32_t>(c.kernel), static_cast<std::uint32_t>(c.kernel)},
                 c.weight});
  out.push_back({prefix + ".bias", {static_cast<std::uint32_t>(c.out_channels)}, c.bias});
}

void push_projection(std::vector<NamedTensor>& out, const std::string& name,
                     const Conv1x1Params& p) {
  auto w = p.weight.values();
  out.push_back({name + ".weight",
                 {static_cast<std::uint32_t>(p.out_channels()), static_cast<std::uint32_t>(p.in_channels())},
                 std::vector<float>(w.begin(), w.end())});
  out.push_back({name + ".bias", {static_cast<std::uint32_t>(p.bias.size())}, p.bias});
}

class TensorIndex {
 public:
  explicit TensorIndex(const std::vector<NamedTensor>& tensors) {
    for (const auto& t : tensors) {
      if (!by_name_.emplace(t.name, &t).second) {
        throw Error(ErrorCode::FormatError, "duplicate tensor " + t.name);
      }
    }
  }

  const NamedTensor& get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw Error(ErrorCode::FormatError, "missing tensor " + name);
    used_.push_back(name);
    return *it->second;
  }

  void expect_all_used() const {
    if (used_.size() != by_name_.size()) {
      for (const auto& [name, t] : by_name_) {
        if (std::find(used_.begin(), used_.end(), name) == used_.end()) {
          throw Error(ErrorCode::FormatError, "unexpected tensor " + name);
        }
      }
    }
  }

 private:
  std::map<std::string, const NamedTensor*> by_name_;
  std::vector<std::string> used_;
};

ConvLayer read_conv(TensorIndex& index, const std::string& prefix) {
  const auto& w = index.get(prefix + ".weight");
  const auto& b = index.get(prefix + ".bias");
  if (w.dims.size() != 4 || w.dims[2] != w.dims[3] || b.dims.size() != 1 ||
      b.dims[0] != w.dims[0]) {
    throw Error(ErrorCode::ShapeError, prefix + " has malformed conv dims");
  }
  return ConvLayer{w.dims[1], w.dims[0], w.dims[2], w.values, b.values};
}

Conv1x1Params read_projection(TensorIndex& index, const std::string& name) {
  const auto& w = index.get(name + ".weight");
  const auto& b = index.get(name + ".bias");
  if (w.dims.size() != 2 || b.dims.size() != 1 || b.dims[0] != w.dims[0]) {
    throw Error(ErrorCode::ShapeError, name + " has malformed projection dims");
  }
  return Conv1x1Params{Matrix(w.dims[0], w.dims[1], w.values), b.values};
}

std::vector<int> read_codes(TensorIndex& index, const std::string& name) {
  const auto& t = index.get(name);
  if (t.dims.size() != 1) throw Error(ErrorCode::ShapeError, name + " must be rank 1");
  std::vector<int> codes;
  for (float v : t.values) {
    if (v != std::floor(v) || v < 0 || v > 3) {
      throw Error(ErrorCode::FormatError, name + " holds an unknown layer code");
    }
    codes.push_back(static_cast<int>(v));
  }
  return codes;
}

}  // namespace

std::vector<NamedTensor> model_to_tensors(const ModelParams& params) {
  std::vector<NamedTensor> out;
  out.push_back({"meta.seed", {2}, {static_cast<float>(params.seed >> 16),
                                    static_cast<float>(params.seed & 0xffffu)}});

  std::vector<float> codes;
  for (const auto& layer : params.encoder.layers) {
    codes.push_back(static_cast<float>(std::visit(
        Overloaded{[](const ConvLayer&) { return kConv; }, [](const ReluLayer&) { return kRelu; },
                   [](const MaxPoolLayer&) { return kPool; }},
        layer)));
  }
  out.push_back({"encoder.layers", {static_cast<std::uint32_t>(codes.size())}, codes});
  for (std::size_t i = 0; i < params.encoder.layers.size(); ++i) {
    if (const auto* c = std::get_if<ConvLayer>(&params.encoder.layers[i])) {
      push_conv(out, "encoder." + std::to_string(i), *c);
    }
  }

  codes.clear();
  for (const auto& layer : params.decoder.layers) {
    codes.push_back(static_cast<float>(std::visit(
        Overloaded{[](const ConvLayer&) { return kConv; }, [](const ReluLayer&) { return kRelu; },
                   [](const UpsampleLayer&) { return kUpsample; }},
        layer)));
  }
  out.push_back({"decoder.layers", {static_cast<std::uint32_t>(codes.size())}, codes});
  for (std::size_t i = 0; i < params.decoder.layers.size(); ++i) {
    if (const auto* c = std::get_if<ConvLayer>(&params.decoder.layers[i])) {
      push_conv(out, "decoder." + std::to_string(i), *c);
    }
  }

  push_projection(out, "query", params.query);
  push_projection(out, "key", params.key);
  push_projection(out, "value", params.value);
  return out;
}

ModelParams model_from_tensors(const std::vector<NamedTensor>& tensors) {
  TensorIndex index(tensors);
  ModelParams m;

  const auto& seed = index.get("meta.seed");
  if (seed.dims != std::vector<std::uint32_t>{2} || seed.values[0] < 0 || seed.values[0] > 65535 ||
      seed.values[1] < 0 || seed.values[1] > 65535) {
    throw Error(ErrorCode::ShapeError, "meta.seed must hold two 16-bit halves");
  }
  m.seed = (static_cast<std::uint32_t>(seed.values[0]) << 16) |
           static_cast<std::uint32_t>(seed.values[1]);

  const auto enc_codes = read_codes(index, "encoder.layers");
  for (std::size_t i = 0; i < enc_codes.size(); ++i) {
    switch (enc_codes[i]) {
      case kConv: m.encoder.layers.emplace_back(read_conv(index, "encoder." + std::to_string(i))); break;
      case kRelu: m.encoder.layers.emplace_back(ReluLayer{}); break;
      case kPool: m.encoder.layers.emplace_back(MaxPoolLayer{}); break;
      default: throw Error(ErrorCode::FormatError, "upsampling layer inside encoder");
    }
  }
  const auto dec_codes = read_codes(index, "decoder.layers");
  for (std::size_t i = 0; i < dec_codes.size(); ++i) {
    switch (dec_codes[i]) {
      case kConv: m.decoder.layers.emplace_back(read_conv(index, "decoder." + std::to_string(i))); break;
      case kRelu: m.decoder.layers.emplace_back(ReluLayer{}); break;
      case kUpsample: m.decoder.layers.emplace_back(UpsampleLayer{}); break;
      default: throw Error(ErrorCode::FormatError, "pooling layer inside decoder");
    }
  }
  m.query = read_projection(index, "query");
  m.key = read_projection(index, "key");
  m.value = read_projection(index, "value");
  index.expect_all_used();
  m.validate();
  return m;
}

void save_weights(const ModelParams& params, const std::filesystem::path& path) {
  const auto tensors = model_to_tensors(params);
  const auto bytes = encode_nstw(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

ModelParams load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FormatError, "cannot open weights file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return model_from_tensors(decode_nstw(bytes));
}

}  // namespace regionstyle

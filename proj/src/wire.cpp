#include "regionstyle/wire.hpp"

#include <array>
#include <limits>

namespace regionstyle {
namespace {

using nlohmann::json;

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::BadRequest, std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

long long require_int(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number_integer()) {
    throw Error(ErrorCode::BadRequest, std::string("field '") + key + "' must be an integer");
  }
  return v.get<long long>();
}

double require_number(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number()) {
    throw Error(ErrorCode::BadRequest, std::string("field '") + key + "' must be a number");
  }
  return v.get<double>();
}

int to_int(long long v, const char* key) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw Error(ErrorCode::BadRequest, std::string("field '") + key + "' out of range");
  }
  return static_cast<int>(v);
}

}  // namespace

json rle_to_json(const Rle& rle) {
  return json{{"h", rle.height}, {"w", rle.width}, {"runs", rle.runs}};
}

Rle rle_from_json(const json& j) {
  const long long h = require_int(j, "h");
  const long long w = require_int(j, "w");
  if (h < 0 || w < 0) throw Error(ErrorCode::BadRequest, "mask dimensions must be non-negative");
  const json& runs = require(j, "runs");
  if (!runs.is_array()) throw Error(ErrorCode::BadRequest, "'runs' must be an array");
  Rle rle{static_cast<std::size_t>(h), static_cast<std::size_t>(w), {}};
  rle.runs.reserve(runs.size());
  for (const auto& r : runs) {
    if (!r.is_number_integer() || r.get<long long>() < 0 ||
        r.get<long long>() > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(ErrorCode::BadRequest, "runs must be non-negative integers");
    }
    rle.runs.push_back(r.get<std::uint32_t>());
  }
  return rle;
}

json prompts_to_json(const PromptSet& prompts) {
  json points = json::array();
  for (const auto& p : prompts.points) {
    points.push_back({{"x", p.x}, {"y", p.y}, {"label", static_cast<int>(p.label)}});
  }
  json out{{"points", points}, {"box", nullptr}};
  if (prompts.box) {
    out["box"] = {{"x_lt", prompts.box->x_lt},
                  {"y_lt", prompts.box->y_lt},
                  {"x_rb", prompts.box->x_rb},
                  {"y_rb", prompts.box->y_rb}};
  }
  if (prompts.contour) {
    json contour = json::array();
    for (const auto& v : *prompts.contour) contour.push_back({{"x", v.x}, {"y", v.y}});
    out["contour"] = contour;
  }
  return out;
}

PromptSet prompts_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::BadRequest, "prompt set must be a JSON object");
  PromptSet prompts;
  if (j.contains("points") && !j.at("points").is_null()) {
    const json& points = j.at("points");
    if (!points.is_array()) throw Error(ErrorCode::BadRequest, "'points' must be an array");
    for (const auto& p : points) {
      const long long label = require_int(p, "label");
      if (label != 0 && label != 1) {
        throw Error(ErrorCode::BadRequest, "point label must be 0 or 1");
      }
      prompts.points.push_back({to_int(require_int(p, "x"), "x"), to_int(require_int(p, "y"), "y"),
                                label == 1 ? PointLabel::Foreground : PointLabel::Background});
    }
  }
  if (j.contains("box") && !j.at("box").is_null()) {
    const json& b = j.at("box");
    prompts.box = PromptBox{to_int(require_int(b, "x_lt"), "x_lt"), to_int(require_int(b, "y_lt"), "y_lt"),
                            to_int(require_int(b, "x_rb"), "x_rb"), to_int(require_int(b, "y_rb"), "y_rb")};
  }
  if (j.contains("contour") && !j.at("contour").is_null()) {
    const json& c = j.at("contour");
    if (!c.is_array()) throw Error(ErrorCode::BadRequest, "'contour' must be an array");
    std::vector<Vertex> contour;
    for (const auto& v : c) contour.push_back({require_number(v, "x"), require_number(v, "y")});
    prompts.contour = std::move(contour);
  }
  return prompts;
}

json error_to_json(const Error& error) {
  json out{{"error", std::string(error.name())}, {"message", error.what()}};
  if (error.index()) {
    switch (error.code()) {
      case ErrorCode::DegenerateRow: out["row"] = *error.index(); break;
      case ErrorCode::MaskTooSmall:
      case ErrorCode::EmptyStyleMask:
      case ErrorCode::DimMismatch:
      case ErrorCode::GridMismatch: out["pair"] = *error.index(); break;
      default: out["index"] = *error.index(); break;
    }
  }
  return out;
}

namespace {
constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) {
    lookup[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
  }
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t buffer = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=') break;
    if (ch == '\n' || ch == '\r') continue;
    const int v = lookup[static_cast<unsigned char>(ch)];
    if (v < 0) throw Error(ErrorCode::BadRequest, "invalid base64 character");
    buffer = (buffer << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((buffer >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace regionstyle

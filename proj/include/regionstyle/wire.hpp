#pragma once

// JSON and base64 forms shared by the HTTP service, the remote segmentation
// client and the CLI.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "regionstyle/error.hpp"
#include "regionstyle/mask.hpp"
#include "regionstyle/segmenter.hpp"

namespace regionstyle {

/// {"h": int, "w": int, "runs": [int, ...]}
nlohmann::json rle_to_json(const Rle& rle);
/// Throws BadRequest for structurally invalid JSON; run sums are checked by rle_decode.
Rle rle_from_json(const nlohmann::json& j);

/// {"points": [{"x","y","label"}], "box": {"x_lt","y_lt","x_rb","y_rb"} | null,
///  "contour": [{"x","y"}, ...] (omitted when absent)}
nlohmann::json prompts_to_json(const PromptSet& prompts);
/// Throws BadRequest on malformed input; "points" may be omitted.
PromptSet prompts_from_json(const nlohmann::json& j);

/// {"error": name, "message": text, "pair"|"row"|"index": n when known}
nlohmann::json error_to_json(const Error& error);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws BadRequest on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace regionstyle

#pragma once

#include <chrono>
#include <string>

#include "regionstyle/mask.hpp"
#include "regionstyle/segmenter.hpp"
#include "regionstyle/tensor.hpp"

namespace regionstyle {

/// Client for an external promptable-segmentation server. POSTs
/// {"image": base64 PNG, "points": [...], "box": {...}|null} to
/// <endpoint>/segment and expects an RLE mask back. One request at a time per
/// handle; use separate handles from separate threads.
class RemoteSegmenter {
 public:
  /// `endpoint` is "http://host:port" optionally followed by a path prefix.
  explicit RemoteSegmenter(std::string endpoint,
                           std::chrono::milliseconds timeout = std::chrono::seconds(10));

  const std::string& endpoint() const noexcept { return endpoint_; }

  /// Throws TransportError (unreachable), Timeout, or ProtocolError (non-200
  /// reply, malformed body, or mask dimensions differing from the image).
  Mask segment(const Image& image, const PromptSet& prompts) const;

 private:
  std::string endpoint_;
  std::string host_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

Mask remote_segment(const std::string& endpoint, const Image& image, const PromptSet& prompts);

}  // namespace regionstyle

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace regionstyle {

enum class ErrorCode {
  ChannelMismatch,
  DimensionMismatch,
  DegenerateRow,
  ImageTooSmall,
  BadImage,
  FormatError,
  ShapeError,
  ChecksumError,
  IoError,
  MaskTooSmall,
  GridMismatch,
  EmptyStyleMask,
  LengthMismatch,
  DimMismatch,
  NoForegroundEvidence,
  OutOfBounds,
  InvalidPrompt,
  TransportError,
  ProtocolError,
  Timeout,
  NotFound,
  BadIndex,
  BadRequest,
};

/// Stable wire name of an error code ("MaskTooSmall", ...).
std::string_view error_name(ErrorCode code) noexcept;

/// Single exception type for the library. `index()` carries the pair index
/// or row index when the failure is attributable to one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }
  const std::optional<std::size_t>& index() const noexcept { return index_; }

  Error with_index(std::size_t index) const;

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

}  // namespace regionstyle

#include "regionstyle/error.hpp"

namespace regionstyle {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateRow: return "DegenerateRow";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::BadImage: return "BadImage";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::ChecksumError: return "ChecksumError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MaskTooSmall: return "MaskTooSmall";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::EmptyStyleMask: return "EmptyStyleMask";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NoForegroundEvidence: return "NoForegroundEvidence";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::InvalidPrompt: return "InvalidPrompt";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::BadIndex: return "BadIndex";
    case ErrorCode::BadRequest: return "BadRequest";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> index)
    : std::runtime_error(std::string(error_name(code)) + ": " + message),
      code_(code),
      index_(index) {}

Error Error::with_index(std::size_t index) const {
  Error copy = *this;
  copy.index_ = index;
  return copy;
}

}  // namespace regionstyle

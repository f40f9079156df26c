#include "regionstyle/remote_segmenter.hpp"

#include <httplib.h>

#include "regionstyle/error.hpp"
#include "regionstyle/png_io.hpp"
#include "regionstyle/wire.hpp"

namespace regionstyle {

RemoteSegmenter::RemoteSegmenter(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {
  const auto scheme = endpoint_.find("://");
  if (scheme == std::string::npos || endpoint_.substr(0, scheme) != "http") {
    throw Error(ErrorCode::TransportError, "endpoint must start with http://: " + endpoint_);
  }
  const auto path_start = endpoint_.find('/', scheme + 3);
  host_ = endpoint_.substr(0, path_start);
  path_ = path_start == std::string::npos ? "" : endpoint_.substr(path_start);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  path_ += "/segment";
}

Mask RemoteSegmenter::segment(const Image& image, const PromptSet& prompts) const {
  nlohmann::json body = prompts_to_json(prompts);
  if (!prompts.contour) body.erase("contour");
  body["image"] = base64_encode(encode_png(image));

  httplib::Client client(host_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  auto result = client.Post(path_, body.dump(), "application/json");
  if (!result) {
    const auto err = result.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw Error(ErrorCode::Timeout,
                  "no reply from " + endpoint_ + ": " + httplib::to_string(err));
    }
    throw Error(ErrorCode::TransportError, endpoint_ + ": " + httplib::to_string(err));
  }
  if (result->status != 200) {
    throw Error(ErrorCode::ProtocolError, "segmentation server answered HTTP " +
                                              std::to_string(result->status));
  }
  Mask mask;
  try {
    mask = rle_decode(rle_from_json(nlohmann::json::parse(result->body)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProtocolError, std::string("reply is not JSON: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ProtocolError, std::string("reply is not a valid mask: ") + e.what());
  }
  if (mask.height() != image.height() || mask.width() != image.width()) {
    throw Error(ErrorCode::ProtocolError,
                "reply mask is " + std::to_string(mask.height()) + "x" +
                    std::to_string(mask.width()) + ", image is " + std::to_string(image.height()) +
                    "x" + std::to_string(image.width()));
  }
  return mask;
}

Mask remote_segment(const std::string& endpoint, const Image& image, const PromptSet& prompts) {
  return RemoteSegmenter(endpoint).segment(image, prompts);
}

}  // namespace regionstyle

#pragma once

// Session-based studio backend: upload content/style images, propose masks
// from prompts, commit ordered mask pairs and render the stylization.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "regionstyle/codec.hpp"
#include "regionstyle/error.hpp"
#include "regionstyle/mask.hpp"
#include "regionstyle/segmenter.hpp"
#include "regionstyle/tensor.hpp"

namespace httplib {
class Server;
}

namespace regionstyle {

enum class ImageRole { Content, Style };

/// Parses "content" / "style"; throws NotFound otherwise.
ImageRole parse_role(std::string_view role);

struct ServiceOptions {
  std::optional<std::string> segment_url;
  std::optional<std::filesystem::path> data_dir;
  SegmenterConfig segmenter;
};

struct PutImageResult {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t pairs_cleared = 0;
};

struct StylizeOutcome {
  std::string reference;
  std::string state;
  bool cached = false;
  std::vector<std::string> warnings;
};

struct SessionSummary {
  std::string id;
  std::optional<Grid> content;
  std::optional<Grid> style;
  std::size_t pairs = 0;
  bool has_result = false;
  std::int64_t created = 0;
  std::int64_t updated = 0;
};

/// Thread-safe. Calls on different sessions run concurrently; mutating calls
/// on one session are serialized, mask proposals only take a shared lock.
class StudioService {
 public:
  explicit StudioService(ModelParams model, ServiceOptions options = {});
  ~StudioService();

  StudioService(const StudioService&) = delete;
  StudioService& operator=(const StudioService&) = delete;

  std::string create_session();
  SessionSummary describe(const std::string& id) const;

  /// Replacing an image that already exists clears every committed pair.
  PutImageResult put_image(const std::string& id, ImageRole role,
                           std::span<const std::uint8_t> png);

  /// Stateless: segments the stored image for `role`; nothing is committed.
  Rle propose_mask(const std::string& id, ImageRole role, const PromptSet& prompts) const;

  /// Returns the index of the new pair. Throws DimMismatch when a mask does
  /// not match its image, NotFound when an image is missing.
  std::size_t commit_pair(const std::string& id, const Rle& content, const Rle& style);

  void remove_pair(const std::string& id, std::size_t index);

  /// Renders (or returns the cached render for an unchanged session state).
  StylizeOutcome run_stylize(const std::string& id);

  std::vector<std::uint8_t> result_png(const std::string& id) const;

  const ModelParams& model() const noexcept { return model_; }

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id) const;
  void persist(const Session& session) const;
  void rehydrate();

  ModelParams model_;
  ServiceOptions options_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// HTTP status used for an error code.
int http_status(ErrorCode code);

/// Installs the REST routes on `server`; `service` must outlive it.
void register_routes(httplib::Server& server, StudioService& service);

}  // namespace regionstyle

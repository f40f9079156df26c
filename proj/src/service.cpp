#include "regionstyle/service.hpp"

#include <httplib.h>

#include <bit>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "regionstyle/error.hpp"
#include "regionstyle/png_io.hpp"
#include "regionstyle/remote_segmenter.hpp"
#include "regionstyle/stylizer.hpp"
#include "regionstyle/wire.hpp"

namespace regionstyle {

struct StudioService::Session {
  std::string id;
  std::optional<Image> content;
  std::optional<Image> style;
  MaskPairSet pairs;
  std::optional<std::vector<std::uint8_t>> result;
  std::string result_state;
  std::int64_t created = 0;
  std::int64_t updated = 0;
  mutable std::shared_mutex mutex;
};

namespace {

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string new_session_id() {
  static std::mutex mutex;
  static std::random_device device;
  static std::mt19937_64 gen(device());
  std::lock_guard lock(mutex);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(gen()),
                static_cast<unsigned long long>(gen()));
  return buf;
}

bool valid_session_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    const bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    c == '-' || c == '_';
    if (!ok) return false;
  }
  return true;
}

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::string state_hash(const Image& content, const Image& style, const MaskPairSet& pairs) {
  Fnv1a h;
  for (const Image* image : {&content, &style}) {
    h.u64(image->height());
    h.u64(image->width());
    for (float v : image->values()) h.u64(std::bit_cast<std::uint32_t>(v));
  }
  h.u64(pairs.size());
  for (const auto& pair : pairs) {
    for (const Mask* m : {&pair.content, &pair.style}) {
      h.u64(m->height());
      h.u64(m->width());
      h.bytes(m->bits().data(), m->bits().size());
    }
  }
  return h.hex();
}

const char* role_name(ImageRole role) { return role == ImageRole::Content ? "content" : "style"; }

}  // namespace

ImageRole parse_role(std::string_view role) {
  if (role == "content") return ImageRole::Content;
  if (role == "style") return ImageRole::Style;
  throw Error(ErrorCode::NotFound, "unknown image role '" + std::string(role) + "'");
}

StudioService::StudioService(ModelParams model, ServiceOptions options)
    : model_(std::move(model)), options_(std::move(options)) {
  model_.validate();
  if (options_.data_dir) {
    std::filesystem::create_directories(*options_.data_dir);
    rehydrate();
  }
}

StudioService::~StudioService() = default;

std::shared_ptr<StudioService::Session> StudioService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "no session '" + id + "'");
  return it->second;
}

std::string StudioService::create_session() {
  auto session = std::make_shared<Session>();
  session->created = session->updated = now_seconds();
  {
    std::lock_guard lock(sessions_mutex_);
    do {
      session->id = new_session_id();
    } while (sessions_.count(session->id) != 0);
    sessions_.emplace(session->id, session);
  }
  std::unique_lock session_lock(session->mutex);
  persist(*session);
  return session->id;
}

SessionSummary StudioService::describe(const std::string& id) const {
  auto session = find(id);
  std::shared_lock lock(session->mutex);
  SessionSummary s{session->id, std::nullopt, std::nullopt, session->pairs.size(),
                   session->result.has_value(), session->created, session->updated};
  if (session->content) s.content = Grid{session->content->height(), session->content->width()};
  if (session->style) s.style = Grid{session->style->height(), session->style->width()};
  return s;
}

PutImageResult StudioService::put_image(const std::string& id, ImageRole role,
                                        std::span<const std::uint8_t> png) {
  Image image = decode_png(png);
  auto session = find(id);
  std::unique_lock lock(session->mutex);
  auto& slot = role == ImageRole::Content ? session->content : session->style;
  PutImageResult result{image.height(), image.width(), 0};
  if (slot) {
    result.pairs_cleared = session->pairs.size();
    session->pairs.clear();
  }
  slot = std::move(image);
  session->result.reset();
  session->result_state.clear();
  session->updated = now_seconds();
  persist(*session);
  return result;
}

Rle StudioService::propose_mask(const std::string& id, ImageRole role,
                                const PromptSet& prompts) const {
  auto session = find(id);
  std::optional<Image> image;
  {
    std::shared_lock lock(session->mutex);
    image = role == ImageRole::Content ? session->content : session->style;
  }
  if (!image) {
    throw Error(ErrorCode::NotFound, std::string("session has no ") + role_name(role) + " image");
  }
  if (options_.segment_url) {
    return rle_encode(RemoteSegmenter(*options_.segment_url).segment(*image, prompts));
  }
  return rle_encode(segment(*image, prompts, options_.segmenter));
}

std::size_t StudioService::commit_pair(const std::string& id, const Rle& content, const Rle& style) {
  Mask content_mask = rle_decode(content);
  Mask style_mask = rle_decode(style);
  auto session = find(id);
  std::unique_lock lock(session->mutex);
  if (!session->content || !session->style) {
    throw Error(ErrorCode::NotFound, "both images must be uploaded before committing pairs");
  }
  const std::size_t index = session->pairs.size();
  if (content_mask.height() != session->content->height() ||
      content_mask.width() != session->content->width()) {
    throw Error(ErrorCode::DimMismatch, "content mask does not match the content image", index);
  }
  if (style_mask.height() != session->style->height() ||
      style_mask.width() != session->style->width()) {
    throw Error(ErrorCode::DimMismatch, "style mask does not match the style image", index);
  }
  session->pairs.push_back({std::move(content_mask), std::move(style_mask)});
  session->updated = now_seconds();
  persist(*session);
  return index;
}

void StudioService::remove_pair(const std::string& id, std::size_t index) {
  auto session = find(id);
  std::unique_lock lock(session->mutex);
  if (index >= session->pairs.size()) {
    throw Error(ErrorCode::BadIndex,
                "pair " + std::to_string(index) + " does not exist (" +
                    std::to_string(session->pairs.size()) + " committed)",
                index);
  }
  session->pairs.erase(session->pairs.begin() + static_cast<std::ptrdiff_t>(index));
  session->updated = now_seconds();
  persist(*session);
}

StylizeOutcome StudioService::run_stylize(const std::string& id) {
  auto session = find(id);
  std::unique_lock lock(session->mutex);
  if (!session->content || !session->style) {
    throw Error(ErrorCode::NotFound, "both images must be uploaded before stylizing");
  }
  const std::string state = state_hash(*session->content, *session->style, session->pairs);
  StylizeOutcome outcome;
  outcome.state = state;
  outcome.reference = "/sessions/" + session->id + "/result?v=" + state;
  if (session->result && session->result_state == state) {
    outcome.cached = true;
    return outcome;
  }
  auto rendered = stylize_with_report(*session->content, *session->style, session->pairs, model_);
  session->result = encode_png(rendered.image);
  session->result_state = state;
  outcome.warnings = std::move(rendered.warnings);
  return outcome;
}

std::vector<std::uint8_t> StudioService::result_png(const std::string& id) const {
  auto session = find(id);
  std::shared_lock lock(session->mutex);
  if (!session->result) throw Error(ErrorCode::NotFound, "no stylization result yet");
  return *session->result;
}

// --- persistence -----------------------------------------------------------

void StudioService::persist(const Session& session) const {
  if (!options_.data_dir) return;
  const auto dir = *options_.data_dir / session.id;
  std::filesystem::create_directories(dir);
  if (session.content) save_png(*session.content, dir / "content.png");
  if (session.style) save_png(*session.style, dir / "style.png");
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& pair : session.pairs) {
    pairs.push_back({{"content", rle_to_json(rle_encode(pair.content))},
                     {"style", rle_to_json(rle_encode(pair.style))}});
  }
  const nlohmann::json manifest{
      {"created", session.created}, {"updated", session.updated}, {"pairs", pairs}};
  const auto tmp = dir / "session.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << manifest.dump();
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / "session.json");
}

void StudioService::rehydrate() {
  for (const auto& entry : std::filesystem::directory_iterator(*options_.data_dir)) {
    if (!entry.is_directory()) continue;
    const auto dir = entry.path();
    const std::string id = dir.filename().string();
    if (!valid_session_id(id) || !std::filesystem::exists(dir / "session.json")) continue;
    try {
      auto session = std::make_shared<Session>();
      session->id = id;
      std::ifstream in(dir / "session.json");
      const auto manifest = nlohmann::json::parse(in);
      session->created = manifest.at("created").get<std::int64_t>();
      session->updated = manifest.at("updated").get<std::int64_t>();
      if (std::filesystem::exists(dir / "content.png")) session->content = load_png(dir / "content.png");
      if (std::filesystem::exists(dir / "style.png")) session->style = load_png(dir / "style.png");
      for (const auto& pair : manifest.at("pairs")) {
        session->pairs.push_back({rle_decode(rle_from_json(pair.at("content"))),
                                  rle_decode(rle_from_json(pair.at("style")))});
      }
      sessions_.emplace(id, std::move(session));
    } catch (const std::exception& e) {
      std::cerr << "regionstyle: skipping unreadable session " << id << ": " << e.what() << '\n';
    }
  }
}

// --- HTTP binding ---------------------------------------------------------

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::BadRequest:
    case ErrorCode::BadImage:
    case ErrorCode::BadIndex:
    case ErrorCode::LengthMismatch:
    case ErrorCode::OutOfBounds:
    case ErrorCode::InvalidPrompt: return 400;
    case ErrorCode::MaskTooSmall:
    case ErrorCode::EmptyStyleMask:
    case ErrorCode::DimMismatch:
    case ErrorCode::GridMismatch:
    case ErrorCode::DegenerateRow:
    case ErrorCode::ImageTooSmall:
    case ErrorCode::NoForegroundEvidence: return 422;
    case ErrorCode::TransportError:
    case ErrorCode::ProtocolError:
    case ErrorCode::Timeout: return 502;
    default: return 500;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_json(res, http_status(e.code()), error_to_json(e));
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, {{"error", "BadRequest"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
    }
  };
}

nlohmann::json grid_json(const std::optional<Grid>& g) {
  if (!g) return nullptr;
  return {{"h", g->height}, {"w", g->width}};
}

std::size_t parse_index(const std::string& text) {
  std::size_t pos = 0;
  unsigned long long value = 0;
  try {
    value = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty()) {
    throw Error(ErrorCode::BadIndex, "pair index must be a non-negative integer");
  }
  return static_cast<std::size_t>(value);
}

}  // namespace

void register_routes(httplib::Server& server, StudioService& service) {
  server.Get("/healthz", guarded([](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  }));

  server.Post("/sessions", guarded([&service](const httplib::Request&, httplib::Response& res) {
    send_json(res, 201, {{"id", service.create_session()}});
  }));

  server.Get(R"(/sessions/([A-Za-z0-9_-]+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const auto s = service.describe(req.matches[1]);
               send_json(res, 200,
                         {{"id", s.id},
                          {"content", grid_json(s.content)},
                          {"style", grid_json(s.style)},
                          {"pairs", s.pairs},
                          {"has_result", s.has_result},
                          {"created", s.created},
                          {"updated", s.updated}});
             }));

  server.Put(R"(/sessions/([A-Za-z0-9_-]+)/images/([a-z]+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const ImageRole role = parse_role(req.matches[2].str());
               const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
               const auto r = service.put_image(req.matches[1], role, {data, req.body.size()});
               send_json(res, 200, {{"h", r.height}, {"w", r.width}, {"pairs_cleared", r.pairs_cleared}});
             }));

  server.Post(R"(/sessions/([A-Za-z0-9_-]+)/masks/([a-z]+))",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const ImageRole role = parse_role(req.matches[2].str());
                const PromptSet prompts = prompts_from_json(nlohmann::json::parse(req.body));
                send_json(res, 200, rle_to_json(service.propose_mask(req.matches[1], role, prompts)));
              }));

  server.Post(R"(/sessions/([A-Za-z0-9_-]+)/pairs)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const auto body = nlohmann::json::parse(req.body);
                if (!body.is_object() || !body.contains("content") || !body.contains("style")) {
                  throw Error(ErrorCode::BadRequest, "body needs 'content' and 'style' masks");
                }
                const auto index = service.commit_pair(req.matches[1], rle_from_json(body.at("content")),
                                                       rle_from_json(body.at("style")));
                send_json(res, 201, {{"index", index}});
              }));

  server.Delete(R"(/sessions/([A-Za-z0-9_-]+)/pairs/([^/]+))",
                guarded([&service](const httplib::Request& req, httplib::Response& res) {
                  service.remove_pair(req.matches[1], parse_index(req.matches[2]));
                  send_json(res, 200, {{"ok", true}});
                }));

  server.Post(R"(/sessions/([A-Za-z0-9_-]+)/stylize)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const auto outcome = service.run_stylize(req.matches[1]);
                send_json(res, 200,
                          {{"result", outcome.reference},
                           {"state", outcome.state},
                           {"cached", outcome.cached},
                           {"warnings", outcome.warnings}});
              }));

  server.Get(R"(/sessions/([A-Za-z0-9_-]+)/result)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const auto png = service.result_png(req.matches[1]);
               res.status = 200;
               res.set_content(std::string(png.begin(), png.end()), "image/png");
             }));
}

}  // namespace regionstyle

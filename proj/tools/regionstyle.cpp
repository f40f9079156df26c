// regionstyle: command-line front end for segmentation, stylization and the
// studio HTTP service.

#include <httplib.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "regionstyle/codec.hpp"
#include "regionstyle/error.hpp"
#include "regionstyle/png_io.hpp"
#include "regionstyle/remote_segmenter.hpp"
#include "regionstyle/segmenter.hpp"
#include "regionstyle/service.hpp"
#include "regionstyle/stylizer.hpp"

namespace rs = regionstyle;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitProcessing = 3;
constexpr int kExitRemote = 4;

int exit_code_for(rs::ErrorCode code) {
  switch (code) {
    case rs::ErrorCode::MaskTooSmall:
    case rs::ErrorCode::EmptyStyleMask:
    case rs::ErrorCode::DimMismatch:
    case rs::ErrorCode::GridMismatch:
    case rs::ErrorCode::DegenerateRow:
    case rs::ErrorCode::ImageTooSmall:
    case rs::ErrorCode::ChannelMismatch:
    case rs::ErrorCode::DimensionMismatch: return kExitProcessing;
    case rs::ErrorCode::TransportError:
    case rs::ErrorCode::ProtocolError:
    case rs::ErrorCode::Timeout: return kExitRemote;
    default: return kExitInput;
  }
}

int report(const rs::Error& e) {
  std::cerr << "regionstyle: " << e.name();
  if (e.index()) {
    std::cerr << (e.code() == rs::ErrorCode::DegenerateRow ? " (row " : " (pair ") << *e.index()
              << ")";
  }
  std::cerr << ": " << e.what() << '\n';
  return exit_code_for(e.code());
}

std::vector<double> parse_numbers(const std::string& text, const char* flag) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      values.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw rs::Error(rs::ErrorCode::BadRequest,
                      std::string("--") + flag + " expects comma-separated numbers, got '" + text + "'");
    }
  }
  return values;
}

int as_int(double v, const char* flag) {
  if (v != static_cast<double>(static_cast<long long>(v))) {
    throw rs::Error(rs::ErrorCode::BadRequest, std::string("--") + flag + " expects integers");
  }
  return static_cast<int>(v);
}

rs::MaskPairSet load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw rs::Error(rs::ErrorCode::IoError, "cannot open pairs manifest " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw rs::Error(rs::ErrorCode::BadRequest, "pairs manifest is not JSON: " + std::string(e.what()));
  }
  if (!manifest.is_object() || !manifest.contains("pairs") || !manifest["pairs"].is_array()) {
    throw rs::Error(rs::ErrorCode::BadRequest, "pairs manifest needs a 'pairs' array");
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const nlohmann::json& entry, const char* key) {
    if (!entry.is_object() || !entry.contains(key) || !entry[key].is_string()) {
      throw rs::Error(rs::ErrorCode::BadRequest, std::string("pair entry lacks '") + key + "'");
    }
    fs::path p = entry[key].get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  rs::MaskPairSet pairs;
  for (const auto& entry : manifest["pairs"]) {
    pairs.push_back({rs::load_mask_png(resolve(entry, "content_mask")),
                     rs::load_mask_png(resolve(entry, "style_mask"))});
  }
  return pairs;
}

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-paired attention style transfer"};
  app.require_subcommand(1);

  // stylize
  auto* stylize_cmd = app.add_subcommand("stylize", "Render a stylization from a pairs manifest");
  std::string content_path, style_path, pairs_path, weights_path, out_path;
  stylize_cmd->add_option("--content", content_path, "Content PNG")->required();
  stylize_cmd->add_option("--style", style_path, "Style PNG")->required();
  stylize_cmd->add_option("--pairs", pairs_path, "Pairs manifest JSON (omit for no pairs)");
  stylize_cmd->add_option("--weights", weights_path, "NSTW weight file")->required();
  stylize_cmd->add_option("--out", out_path, "Output PNG")->required();

  // segment
  auto* segment_cmd = app.add_subcommand("segment", "Write a mask PNG from prompts");
  std::string image_path, box_text, contour_text, mask_out, segment_url_flag;
  std::vector<std::string> point_texts;
  double tolerance = rs::SegmenterConfig{}.tolerance;
  segment_cmd->add_option("--image", image_path, "Input PNG")->required();
  segment_cmd->add_option("--point", point_texts, "x,y,label (label 1 = foreground, 0 = background)");
  segment_cmd->add_option("--box", box_text, "x_lt,y_lt,x_rb,y_rb");
  segment_cmd->add_option("--contour", contour_text, "x1,y1,x2,y2,... closed polygon");
  segment_cmd->add_option("--tolerance", tolerance, "Region growing colour tolerance");
  segment_cmd->add_option("--segment-url", segment_url_flag, "Delegate to a remote segmenter");
  segment_cmd->add_option("--out", mask_out, "Output mask PNG")->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the studio HTTP service");
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string serve_weights, segment_url, data_dir;
  serve_cmd->add_option("--port", port, "Listen port (0 picks a free one)")->envname("REGIONSTYLE_PORT");
  serve_cmd->add_option("--host", host, "Listen address");
  serve_cmd->add_option("--weights", serve_weights, "NSTW weight file (default: built-in toy model)")
      ->envname("REGIONSTYLE_WEIGHTS");
  serve_cmd->add_option("--segment-url", segment_url, "Remote segmentation endpoint")
      ->envname("REGIONSTYLE_SEGMENT_URL");
  serve_cmd->add_option("--data-dir", data_dir, "Directory for session persistence")
      ->envname("REGIONSTYLE_DATA_DIR");

  // make-weights
  auto* weights_cmd = app.add_subcommand("make-weights", "Write a seeded weight file");
  std::string config = "toy";
  std::uint32_t seed = 1234;
  std::string weights_out;
  weights_cmd->add_option("--config", config, "toy | identity | vgg19")
      ->check(CLI::IsMember({"toy", "identity", "vgg19"}));
  weights_cmd->add_option("--seed", seed, "Weight seed");
  weights_cmd->add_option("--out", weights_out, "Output NSTW file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*stylize_cmd) {
      const rs::ModelParams model = rs::load_weights(weights_path);
      const rs::Image content = rs::load_png(content_path);
      const rs::Image style = rs::load_png(style_path);
      const rs::MaskPairSet pairs = pairs_path.empty() ? rs::MaskPairSet{} : load_manifest(pairs_path);
      auto result = rs::stylize_with_report(content, style, pairs, model);
      for (const auto& w : result.warnings) std::cerr << "regionstyle: warning: " << w << '\n';
      rs::save_png(result.image, out_path);
      return kExitOk;
    }

    if (*segment_cmd) {
      const rs::Image image = rs::load_png(image_path);
      rs::PromptSet prompts;
      for (const auto& text : point_texts) {
        const auto v = parse_numbers(text, "point");
        if (v.size() != 3 || (v[2] != 0 && v[2] != 1)) {
          throw rs::Error(rs::ErrorCode::BadRequest, "--point expects x,y,label with label 0 or 1");
        }
        prompts.points.push_back({as_int(v[0], "point"), as_int(v[1], "point"),
                                  v[2] == 1 ? rs::PointLabel::Foreground : rs::PointLabel::Background});
      }
      if (!box_text.empty()) {
        const auto v = parse_numbers(box_text, "box");
        if (v.size() != 4) throw rs::Error(rs::ErrorCode::BadRequest, "--box expects 4 numbers");
        prompts.box = rs::PromptBox{as_int(v[0], "box"), as_int(v[1], "box"), as_int(v[2], "box"),
                                    as_int(v[3], "box")};
      }
      if (!contour_text.empty()) {
        const auto v = parse_numbers(contour_text, "contour");
        if (v.size() % 2 != 0) {
          throw rs::Error(rs::ErrorCode::BadRequest, "--contour expects x,y pairs");
        }
        std::vector<rs::Vertex> contour;
        for (std::size_t i = 0; i < v.size(); i += 2) contour.push_back({v[i], v[i + 1]});
        prompts.contour = std::move(contour);
      }
      std::vector<std::string> warnings;
      const rs::Mask mask = segment_url_flag.empty()
                                ? rs::segment(image, prompts, {tolerance}, &warnings)
                                : rs::remote_segment(segment_url_flag, image, prompts);
      for (const auto& w : warnings) std::cerr << "regionstyle: warning: " << w << '\n';
      rs::save_mask_png(mask, mask_out);
      return kExitOk;
    }

    if (*weights_cmd) {
      const rs::ModelParams model = config == "identity" ? rs::identity_model()
                                    : config == "vgg19"  ? rs::vgg19_relu4_1_model(seed)
                                                         : rs::toy_model(seed);
      rs::save_weights(model, weights_out);
      return kExitOk;
    }

    if (*serve_cmd) {
      rs::ModelParams model;
      if (serve_weights.empty()) {
        std::cerr << "regionstyle: no --weights given, serving the built-in toy model\n";
        model = rs::toy_model();
      } else {
        model = rs::load_weights(serve_weights);
      }
      rs::ServiceOptions options;
      if (!segment_url.empty()) options.segment_url = segment_url;
      if (!data_dir.empty()) options.data_dir = data_dir;
      rs::StudioService service(std::move(model), options);

      httplib::Server server;
      rs::register_routes(server, service);
      int bound = port;
      if (port == 0) {
        bound = server.bind_to_any_port(host);
      } else if (!server.bind_to_port(host, port)) {
        bound = -1;
      }
      if (bound < 0) {
        std::cerr << "regionstyle: cannot bind " << host << ":" << port << '\n';
        return kExitInput;
      }
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::thread watcher([&server] {
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        server.stop();
      });
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      server.listen_after_bind();
      g_stop = true;
      watcher.join();
      std::cout << "shut down" << std::endl;
      return kExitOk;
    }
  } catch (const rs::Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "regionstyle: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <thread>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "regionstyle/png_io.hpp"
#include "regionstyle/service.hpp"
#include "regionstyle/stylizer.hpp"
#include "regionstyle/wire.hpp"
#include "test_support.hpp"

using namespace regionstyle;
using nlohmann::json;
using testing_support::TempDir;

namespace {

struct Run {
  int exit = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("'") + REGIONSTYLE_CLI + "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

/// A `serve` child process whose stdout is read line by line.
class ServeProcess {
 public:
  explicit ServeProcess(std::vector<std::string> args) {
    int fds[2];
    REQUIRE(pipe(fds) == 0);
    pid_ = fork();
    REQUIRE(pid_ >= 0);
    if (pid_ == 0) {
      dup2(fds[1], STDOUT_FILENO);
      close(fds[0]);
      close(fds[1]);
      std::vector<char*> argv{const_cast<char*>(REGIONSTYLE_CLI), const_cast<char*>("serve")};
      for (auto& a : args) argv.push_back(a.data());
      argv.push_back(nullptr);
      execv(REGIONSTYLE_CLI, argv.data());
      _exit(127);
    }
    close(fds[1]);
    out_ = fdopen(fds[0], "r");
  }
  ~ServeProcess() {
    if (pid_ > 0) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
    if (out_) fclose(out_);
  }

  std::string line() {
    char buf[512];
    if (!fgets(buf, sizeof buf, out_)) return {};
    std::string s(buf);
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
  }

  int interrupt() {
    kill(pid_, SIGINT);
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

 private:
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
};

int port_of(const std::string& listening) {
  const auto colon = listening.rfind(':');
  REQUIRE(colon != std::string::npos);
  return std::stoi(listening.substr(colon + 1));
}

}  // namespace

TEST_CASE("make-weights and stylize without pairs") {
  TempDir dir;
  std::mt19937 rng(61);
  save_png(oracle::random_image(rng, 64, 64), dir / "c.png");
  save_png(oracle::random_image(rng, 64, 64), dir / "s.png");
  REQUIRE(run(dir, "make-weights --config toy --out " + q(dir / "toy.nstw")).exit == 0);
  CHECK(load_weights(dir / "toy.nstw") == toy_model());

  const Run r = run(dir, "stylize --content " + q(dir / "c.png") + " --style " + q(dir / "s.png") + " --weights " +
                             q(dir / "toy.nstw") + " --out " + q(dir / "out.png"));
  CHECK(r.exit == 0);
  const Image expected = stylize(load_png(dir / "c.png"), load_png(dir / "s.png"), {}, toy_model());
  CHECK(read_file(dir / "out.png") == encode_png(expected));
}

TEST_CASE("stylize with a pairs manifest") {
  TempDir dir;
  std::mt19937 rng(62);
  save_png(oracle::random_image(rng, 32, 32), dir / "c.png");
  save_png(oracle::random_image(rng, 32, 32), dir / "s.png");
  run(dir, "make-weights --out " + q(dir / "w.nstw"));
  const Mask cm = oracle::random_mask(rng, 32, 32, 0.6);
  Mask sm(32, 32);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 32; ++x) sm.set(y, x);
  save_mask_png(cm, dir / "cm.png");
  save_mask_png(sm, dir / "sm.png");
  write_file(dir / "pairs.json", [] {
    const std::string text = json{{"pairs", {{{"content_mask", "cm.png"}, {"style_mask", "sm.png"}}}}}.dump();
    return std::vector<std::uint8_t>(text.begin(), text.end());
  }());
  const Run r = run(dir, "stylize --content " + q(dir / "c.png") + " --style " + q(dir / "s.png") + " --pairs " +
                             q(dir / "pairs.json") + " --weights " + q(dir / "w.nstw") + " --out " + q(dir / "o.png"));
  CHECK(r.exit == 0);
  const Image expected = stylize(load_png(dir / "c.png"), load_png(dir / "s.png"), {{cm, sm}}, toy_model());
  CHECK(read_file(dir / "o.png") == encode_png(expected));
}

TEST_CASE("exit codes and error messages") {
  TempDir dir;
  std::mt19937 rng(63);
  save_png(oracle::random_image(rng, 32, 32), dir / "c.png");
  run(dir, "make-weights --out " + q(dir / "w.nstw"));

  const Run missing = run(dir, "stylize --content " + q(dir / "c.png") + " --style " + q(dir / "c.png") +
                                   " --weights " + q(dir / "nope.nstw") + " --out " + q(dir / "o.png"));
  CHECK(missing.exit == 2);
  CHECK(missing.err.find("FormatError") != std::string::npos);

  Mask sliver(32, 32);
  sliver.set(0, 0);
  save_mask_png(Mask::full(32, 32), dir / "full.png");
  save_mask_png(sliver, dir / "sliver.png");
  const std::string manifest = json{{"pairs",
                                     {{{"content_mask", "full.png"}, {"style_mask", "full.png"}},
                                      {{"content_mask", "full.png"}, {"style_mask", "sliver.png"}}}}}
                                   .dump();
  write_file(dir / "pairs.json", std::vector<std::uint8_t>(manifest.begin(), manifest.end()));
  const Run small = run(dir, "stylize --content " + q(dir / "c.png") + " --style " + q(dir / "c.png") + " --pairs " +
                                 q(dir / "pairs.json") + " --weights " + q(dir / "w.nstw") + " --out " + q(dir / "o.png"));
  CHECK(small.exit == 3);
  CHECK(small.err.find("MaskTooSmall") != std::string::npos);
  CHECK(small.err.find("pair 1") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "o.png"));

  CHECK(run(dir, "stylize --content " + q(dir / "c.png")).exit == 2);
  const Run no_fg = run(dir, "segment --image " + q(dir / "c.png") + " --point 1,1,0 --out " + q(dir / "m.png"));
  CHECK(no_fg.exit == 2);
  CHECK(no_fg.err.find("NoForegroundEvidence") != std::string::npos);
  CHECK(run(dir, "segment --image " + q(dir / "c.png") + " --point 99,1,1 --out " + q(dir / "m.png")).exit == 2);
  CHECK(run(dir, "segment --image " + q(dir / "c.png") + " --point 1,1,1 --segment-url http://127.0.0.1:1 --out " +
                     q(dir / "m.png"))
            .exit == 4);
}

TEST_CASE("segment writes a mask") {
  TempDir dir;
  Image img(8, 10);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 10; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.set(y, x, c, x < 4 ? 0.0f : 1.0f);
  save_png(img, dir / "i.png");
  REQUIRE(run(dir, "segment --image " + q(dir / "i.png") + " --point 1,1,1 --out " + q(dir / "m.png")).exit == 0);
  const Mask m = load_mask_png(dir / "m.png");
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 10; ++x) CHECK(m.test(y, x) == (x < 4));

  REQUIRE(run(dir, "segment --image " + q(dir / "i.png") + " --contour 0,0,2,0,2,2,0,2 --out " + q(dir / "k.png")).exit == 0);
  CHECK(load_mask_png(dir / "k.png").count() == 4);

  REQUIRE(run(dir, "segment --image " + q(dir / "i.png") + " --point 1,1,1 --box 1,2,3,6 --out " + q(dir / "b.png")).exit == 0);
  const Mask boxed = load_mask_png(dir / "b.png");
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 10; ++x) CHECK(boxed.test(y, x) == (x >= 1 && x < 3 && y >= 2 && y < 6));
}

TEST_CASE("segment delegates to a remote endpoint") {
  TempDir dir;
  std::mt19937 rng(64);
  save_png(oracle::random_image(rng, 6, 6), dir / "i.png");
  const Mask fixture = oracle::random_mask(rng, 6, 6);
  httplib::Server mock;
  mock.Post("/segment", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(rle_to_json(rle_encode(fixture)).dump(), "application/json");
  });
  const int port = mock.bind_to_any_port("127.0.0.1");
  std::thread t([&] { mock.listen_after_bind(); });
  mock.wait_until_ready();
  const Run r = run(dir, "segment --image " + q(dir / "i.png") + " --point 1,1,1 --segment-url http://127.0.0.1:" +
                             std::to_string(port) + " --out " + q(dir / "m.png"));
  mock.stop();
  t.join();
  CHECK(r.exit == 0);
  CHECK(load_mask_png(dir / "m.png") == fixture);
}

TEST_CASE("serve answers health checks and stops on SIGINT") {
  TempDir dir;
  ServeProcess serve({"--port", "0", "--host", "127.0.0.1", "--data-dir", (dir / "data").string()});
  const std::string listening = serve.line();
  REQUIRE(listening.rfind("listening on http://127.0.0.1:", 0) == 0);
  httplib::Client client("127.0.0.1", port_of(listening));
  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  auto created = client.Post("/sessions", "", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  CHECK(serve.interrupt() == 0);
  CHECK(serve.line() == "shut down");
  const std::string id = json::parse(created->body)["id"];
  CHECK(std::filesystem::exists(dir / "data" / id / "session.json"));
}

TEST_CASE("serve routes mask proposals to the remote segmenter") {
  TempDir dir;
  std::mt19937 rng(66);
  const Image img = oracle::random_image(rng, 6, 7);
  const Mask fixture = oracle::random_mask(rng, 6, 7);
  std::atomic<int> hits{0};
  httplib::Server mock;
  mock.Post("/segment", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.set_content(rle_to_json(rle_encode(fixture)).dump(), "application/json");
  });
  const int mock_port = mock.bind_to_any_port("127.0.0.1");
  std::thread t([&] { mock.listen_after_bind(); });
  mock.wait_until_ready();

  ServeProcess serve({"--port", "0", "--host", "127.0.0.1", "--segment-url",
                      "http://127.0.0.1:" + std::to_string(mock_port)});
  const std::string listening = serve.line();
  REQUIRE(listening.rfind("listening on", 0) == 0);
  httplib::Client client("127.0.0.1", port_of(listening));
  const std::string id = json::parse(client.Post("/sessions", "", "application/json")->body)["id"];
  const auto png = encode_png(img);
  client.Put("/sessions/" + id + "/images/content", std::string(png.begin(), png.end()), "image/png");
  auto mask = client.Post("/sessions/" + id + "/masks/content",
                          json{{"points", {{{"x", 1}, {"y", 1}, {"label", 1}}}}}.dump(), "application/json");
  REQUIRE(mask);
  CHECK(mask->status == 200);
  CHECK(rle_decode(rle_from_json(json::parse(mask->body))) == fixture);
  CHECK(hits.load() == 1);
  CHECK(serve.interrupt() == 0);
  mock.stop();
  t.join();
}

TEST_CASE("serve rejects bad weights") {
  TempDir dir;
  CHECK(run(dir, "serve --port 0 --weights " + q(dir / "missing.nstw")).exit == 2);
}

TEST_CASE("cli output byte-equals the service result") {
  TempDir dir;
  std::mt19937 rng(65);
  save_png(oracle::random_image(rng, 64, 64), dir / "c.png");
  save_png(oracle::random_image(rng, 64, 64), dir / "s.png");
  run(dir, "make-weights --config toy --seed 7 --out " + q(dir / "w.nstw"));
  const std::string cli = "stylize --content " + q(dir / "c.png") + " --style " + q(dir / "s.png") + " --weights " +
                          q(dir / "w.nstw") + " --out ";
  REQUIRE(run(dir, cli + q(dir / "a.png")).exit == 0);
  REQUIRE(run(dir, cli + q(dir / "b.png")).exit == 0);
  CHECK(read_file(dir / "a.png") == read_file(dir / "b.png"));

  StudioService service(load_weights(dir / "w.nstw"));
  const std::string id = service.create_session();
  service.put_image(id, ImageRole::Content, read_file(dir / "c.png"));
  service.put_image(id, ImageRole::Style, read_file(dir / "s.png"));
  service.run_stylize(id);
  CHECK(service.result_png(id) == read_file(dir / "a.png"));
}

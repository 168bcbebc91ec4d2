#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "uiesnn/config.hpp"
#include "uiesnn/trainer.hpp"

using namespace uiesnn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("uiesnn_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("parses key=value lines with comments and whitespace") {
  const Config cfg = Config::parse_string(
      "# leading comment\n"
      "  net.timesteps = 4   # trailing comment\n"
      "data.root=synthetic\n"
      "\n"
      "optim.lr = 2e-4\n"
      "net.use_fdm = true\n");
  CHECK(cfg.get_int("net.timesteps") == 4);
  CHECK(cfg.get_string("data.root") == "synthetic");
  CHECK(cfg.get_float("optim.lr") == doctest::Approx(2e-4));
  CHECK(cfg.get_bool("net.use_fdm"));
  CHECK(cfg.get_int("missing.key", 7) == 7);
  CHECK_FALSE(cfg.has("missing.key"));
}

TEST_CASE("value and structure errors name the key and line") {
  CHECK_THROWS_AS(Config::parse_string("just words\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse_string("= 3\n"), ConfigError);

  const Config cfg = Config::parse_string("a = x\nb = 1.5\nc = maybe\n", "f");
  try {
    cfg.get_int("b");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'b'") != std::string::npos);
    CHECK(msg.find("f:2") != std::string::npos);
  }
  CHECK_THROWS_AS(cfg.get_int("a"), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("c"), ConfigError);
  CHECK_THROWS_AS(cfg.get_float("a"), ConfigError);
  CHECK_THROWS_AS(cfg.get_string("nope"), ConfigError);
}

TEST_CASE("includes resolve relative to the including file, later wins") {
  const fs::path dir = fresh_dir("cfg_inc");
  fs::create_directories(dir / "sub");
  write_file(dir / "sub" / "base.cfg",
             "net.timesteps = 2\nnet.base_channels = 8\n");
  write_file(dir / "main.cfg",
             "include sub/base.cfg\n"
             "net.timesteps = 4\n");  // override after include
  const Config cfg = Config::parse_file((dir / "main.cfg").string());
  CHECK(cfg.get_int("net.timesteps") == 4);
  CHECK(cfg.get_int("net.base_channels") == 8);

  write_file(dir / "missing.cfg", "include nowhere.cfg\n");
  CHECK_THROWS_AS(Config::parse_file((dir / "missing.cfg").string()),
                  ConfigError);
  write_file(dir / "loop.cfg", "include loop.cfg\n");
  CHECK_THROWS_AS(Config::parse_file((dir / "loop.cfg").string()), ConfigError);
}

TEST_CASE("unknown keys are rejected with key and line") {
  const Config cfg =
      Config::parse_string("net.timesteps = 2\nnet.tmiesteps = 3\n", "f");
  try {
    settings_from_config(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("net.tmiesteps") != std::string::npos);
    CHECK(msg.find("f:2") != std::string::npos);
  }
}

TEST_CASE("parse -> serialise -> parse is a fixed point") {
  const Config cfg = Config::parse_string(
      "net.timesteps = 2\n"
      "net.stage_layout = 1,1,2,1,1,1\n"
      "optim.lr = 0.001\n"
      "data.root = /some/dir\n");
  const std::string once = cfg.serialize();
  CHECK(Config::parse_string(once).serialize() == once);
}

TEST_CASE("train settings round trip through the config form") {
  TrainSettings s;
  s.net.timesteps = 2;
  s.net.d_levels = 3;
  s.net.base_channels = 8;
  s.net.stage_layout = {1, 2, 3, 1, 1, 2};
  s.net.use_mda = false;
  s.net.neuron.gamma = 0.25f;
  s.loss.lambda_fft = 0.05f;
  s.optim.lr = 1e-3f;
  s.iterations = 42;
  s.lr_decay = 0.5f;
  s.seed = 1234;
  s.patch = 16;
  s.batch = 3;
  s.synthetic_count = 5;
  s.synthetic_size = 24;

  const Config cfg = settings_to_config(s);
  const TrainSettings back = settings_from_config(cfg);
  CHECK(settings_to_config(back).serialize() == cfg.serialize());
  CHECK(back.net.stage_layout == s.net.stage_layout);
  CHECK(back.seed == s.seed);
  CHECK(back.net.neuron.gamma == s.net.neuron.gamma);
}

TEST_CASE("settings validation rejects bad shapes") {
  auto parse = [](const std::string& text) {
    return settings_from_config(Config::parse_string(text));
  };
  CHECK_THROWS_AS(parse("data.patch = 30\n"), ConfigError);     // not mult of 4
  CHECK_THROWS_AS(parse("data.batch = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("train.iterations = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("train.lr_decay = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse("net.stage_layout = 1,2\n"), ConfigError);
  CHECK_THROWS_AS(parse("optim.lr = -1\n"), ConfigError);
  CHECK_NOTHROW(parse(""));  // all defaults are valid
}

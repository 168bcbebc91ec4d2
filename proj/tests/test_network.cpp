#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "uiesnn/network.hpp"
#include "uiesnn/ops.hpp"

using namespace uiesnn;
namespace op = uiesnn::ops;
namespace fs = std::filesystem;

namespace {

NetConfig micro_config() {
  NetConfig cfg;
  cfg.timesteps = 2;
  cfg.d_levels = 4;
  cfg.base_channels = 8;
  cfg.stage_layout = {1, 1, 1, 1, 1, 1};
  return cfg;
}

Tensor random_image(int b, int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  Tensor img(Shape::t5(1, b, 3, h, w));
  testutil::fill_uniform(img, rng, 0.0f, 1.0f);
  return img;
}

}  // namespace

TEST_CASE("replicate_temporal copies and sums gradients") {
  Tensor img = random_image(1, 4, 4, 3);
  Tensor one = op::replicate_temporal(img, 1);
  CHECK(one.values() == img.values());

  Tensor four = op::replicate_temporal(img, 4);
  const std::size_t n = img.values().size();
  for (int t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < n; ++i)
      CHECK(four.values()[std::size_t(t) * n + i] == img.values()[i]);

  Tensor x = Tensor::from(img.shape(), img.values(), true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = op::sum_all(op::replicate_temporal(x, 4));
    tape.backward(loss);
  }
  for (std::size_t i = 0; i < n; ++i) CHECK(x.grad()[i] == 4.0f);
}

TEST_CASE("config validation") {
  NetConfig bad = micro_config();
  bad.base_channels = 6;
  CHECK_THROWS_AS(Model{bad}, ParameterError);
  bad = micro_config();
  bad.stage_layout[2] = -1;
  CHECK_THROWS_AS(Model{bad}, ParameterError);
  bad = micro_config();
  bad.timesteps = 0;
  CHECK_THROWS_AS(Model{bad}, ParameterError);
}

TEST_CASE("forward shape law across the three scales") {
  Model m(micro_config());
  Tensor img = random_image(1, 64, 64, 7);
  MultiScaleOutput out = m.forward(img, false);
  CHECK(out.full.shape() == Shape::t5(1, 1, 3, 64, 64));
  CHECK(out.half.shape() == Shape::t5(1, 1, 3, 32, 32));
  CHECK(out.quarter.shape() == Shape::t5(1, 1, 3, 16, 16));
}

TEST_CASE("global residual identity with zero heads") {
  Model m(micro_config());  // heads are zero-initialised
  Tensor img = random_image(2, 16, 16, 11);
  MultiScaleOutput out = m.forward(img, false);
  CHECK(out.full.values() == img.values());  // bitwise
  Tensor half = op::resize_bilinear(img, 8, 8);
  Tensor quarter = op::resize_bilinear(img, 4, 4);
  CHECK(out.half.values() == half.values());
  CHECK(out.quarter.values() == quarter.values());
}

TEST_CASE("eval forward is deterministic") {
  Model m(micro_config());
  std::mt19937 rng(13);
  for (auto& [name, p] : m.registry().params) testutil::fill_uniform(p, rng, -0.2f, 0.2f);
  Tensor img = random_image(1, 16, 16, 17);
  MultiScaleOutput a = m.forward(img, false);
  MultiScaleOutput b = m.forward(img, false);
  CHECK(a.full.values() == b.full.values());
  CHECK(a.half.values() == b.half.values());
  CHECK(a.quarter.values() == b.quarter.values());
}

TEST_CASE("non-divisible sizes: eval pads, training refuses") {
  Model m(micro_config());
  Tensor img = random_image(1, 30, 30, 19);
  MultiScaleOutput out = m.forward(img, false);
  CHECK(out.full.shape() == Shape::t5(1, 1, 3, 30, 30));
  CHECK(out.half.shape() == Shape::t5(1, 1, 3, 15, 15));
  CHECK(out.quarter.shape() == Shape::t5(1, 1, 3, 8, 8));
  CHECK_THROWS_AS(m.forward(img, true), ShapeError);
}

TEST_CASE("parameter count matches an independent tally") {
  NetConfig cfg;
  cfg.timesteps = 4;
  cfg.d_levels = 4;
  cfg.base_channels = 16;
  cfg.stage_layout = {4, 4, 8, 2, 2, 2};
  Model m(cfg);

  auto conv = [](std::int64_t cin, std::int64_t cout, std::int64_t k) {
    return cout * cin * k * k;
  };
  auto bn = [](std::int64_t c) { return 2 * c; };
  auto mda = [&](std::int64_t c, std::int64_t t) {
    const std::int64_t th = std::max<std::int64_t>(1, t / 4);
    const std::int64_t ch = std::max<std::int64_t>(1, c / 4);
    return th * t + th + t * th + t + ch * c + ch + c * ch + c + conv(1, 1, 7);
  };
  auto mplb = [&](std::int64_t c) {
    const std::int64_t c4 = c / 4;
    std::int64_t n = 0;
    n += 4 * (conv(c4, c4, 1) + bn(c4));  // branches
    n += 4 * c4;                          // theta
    n += 3 * (conv(2 * c4, c4, 1) + bn(c4));  // mixtures
    n += conv(c, c, 3) + bn(c);               // fusion
    return n;
  };
  auto srb = [&](std::int64_t c, std::int64_t t) {
    return 2  // fdm scalars
           + conv(c, c, 3) + bn(c) + mplb(c) + conv(c, c, 3) + bn(c) +
           conv(c, c, 1) + bn(c) + mda(c, t);
  };
  const std::int64_t b1 = 16, b2 = 32, b3 = 64, emb = 8, t = 4;
  std::int64_t want = 0;
  want += conv(3, b1, 3) + bn(b1);  // embed
  want += 4 * srb(b1, t);
  want += conv(b1, 2 * b1, 3) + bn(2 * b1);  // down1
  want += conv(3, emb, 3) + conv(b2 + emb, b2, 1) + bn(b2);  // inject2
  want += 4 * srb(b2, t);
  want += conv(b2, 2 * b2, 3) + bn(2 * b2);  // down2
  want += conv(3, emb, 3) + conv(b3 + emb, b3, 1) + bn(b3);  // inject3
  want += 8 * srb(b3, t);
  want += 2 * srb(b3, t);                        // dec3
  want += conv(b3, b3 / 2, 3) + bn(b3 / 2);      // up2
  want += conv(2 * b2, b2, 1) + bn(b2);          // skip2
  want += 2 * srb(b2, t);
  want += conv(b2, b2 / 2, 3) + bn(b2 / 2);      // up1
  want += conv(2 * b1, b1, 1) + bn(b1);          // skip1
  want += 2 * srb(b1, t);
  want += conv(b1, 3, 3) + conv(b2, 3, 3) + conv(b3, 3, 3);  // heads

  CHECK(m.param_count() == want);
}

TEST_CASE("checkpoint round trip is bitwise") {
  Model m(micro_config());
  std::mt19937 rng(23);
  for (auto& [name, p] : m.registry().params) testutil::fill_uniform(p, rng, -0.2f, 0.2f);
  Tensor img = random_image(1, 16, 16, 29);
  m.forward(img, true);  // move the running statistics off their init values
  m.step = 137;

  const fs::path ckpt = fs::temp_directory_path() / "uiesnn_test.ckpt";
  m.save_checkpoint(ckpt.string());
  Model loaded = Model::load_checkpoint(ckpt.string());
  CHECK(loaded.step == 137);
  CHECK(loaded.config().base_channels == 8);

  MultiScaleOutput a = m.forward(img, false);
  MultiScaleOutput b = loaded.forward(img, false);
  CHECK(a.full.values() == b.full.values());
  CHECK(a.half.values() == b.half.values());
  CHECK(a.quarter.values() == b.quarter.values());
  fs::remove(ckpt);
}

TEST_CASE("checkpoint corruption variants") {
  Model m(micro_config());
  const fs::path dir = fs::temp_directory_path();
  const fs::path ckpt = dir / "uiesnn_corrupt.ckpt";
  m.save_checkpoint(ckpt.string());

  // truncation
  {
    std::ifstream in(ckpt, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.resize(bytes.size() / 2);
    std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(Model::load_checkpoint((dir / "trunc.ckpt").string()), FormatError);

  // bad magic
  {
    std::fstream f(dir / "magic.ckpt", std::ios::binary | std::ios::out);
    f << "NOPE";
  }
  CHECK_THROWS_AS(Model::load_checkpoint((dir / "magic.ckpt").string()), FormatError);

  // edited channel count: header says 12, records were written for 8
  {
    std::ifstream in(ckpt, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    const std::int32_t wider = 12;
    std::memcpy(bytes.data() + 16, &wider, sizeof(wider));
    std::ofstream out(dir / "edited.ckpt", std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
  }
  try {
    Model::load_checkpoint((dir / "edited.ckpt").string());
    FAIL("expected IncompatibleCheckpointError");
  } catch (const IncompatibleCheckpointError& e) {
    CHECK(std::string(e.what()).find("embed.conv.w") != std::string::npos);
  }

  for (const char* f : {"uiesnn_corrupt.ckpt", "trunc.ckpt", "magic.ckpt", "edited.ckpt"})
    fs::remove(dir / f);
}

TEST_CASE("end-to-end frozen-spike gradient check on a micro model") {
  NetConfig cfg;
  cfg.timesteps = 2;
  cfg.d_levels = 4;
  cfg.base_channels = 4;
  cfg.stage_layout = {1, 1, 1, 1, 1, 1};
  Model m(cfg);
  std::mt19937 rng(31);
  // zero heads would hide the network body behind the residual path
  for (auto& [name, p] : m.registry().params)
    if (name.rfind("head", 0) == 0) testutil::fill_uniform(p, rng, -0.1f, 0.1f);

  Tensor img(Shape::t5(1, 1, 3, 16, 16), true);
  testutil::fill_uniform(img, rng, 0.1f, 0.9f);

  Tensor p1(Shape::t5(1, 1, 3, 16, 16)), p2(Shape::t5(1, 1, 3, 8, 8)),
      p3(Shape::t5(1, 1, 3, 4, 4));
  testutil::fill_uniform(p1, rng, 0.1f, 1.0f);
  testutil::fill_uniform(p2, rng, 0.1f, 1.0f);
  testutil::fill_uniform(p3, rng, 0.1f, 1.0f);

  auto project = [&]() {
    MultiScaleOutput out = m.forward(img, false);
    return op::add(op::add(op::sum_all(op::mul(out.full, p1)),
                           op::sum_all(op::mul(out.half, p2))),
                   op::sum_all(op::mul(out.quarter, p3)));
  };

  m.forward(img, false);  // hard pass builds neuron caches
  set_frozen_spike_mode(true);
  auto loss = [&]() { return double(project().item()); };
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor l = project();
    tape.backward(l);
  }
  auto fd = testutil::finite_diff(img, loss, 5e-3f);
  set_frozen_spike_mode(false);
  CHECK(testutil::max_grad_err(img.grad(), fd) < 1e-2);
}

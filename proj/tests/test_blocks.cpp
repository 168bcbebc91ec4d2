#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "uiesnn/blocks.hpp"
#include "uiesnn/ops.hpp"

using namespace uiesnn;
namespace op = uiesnn::ops;
namespace fs = std::filesystem;

namespace {

NeuronConfig default_cfg() { return NeuronConfig{}; }

void randomize_block_params(ParamRegistry& r, std::mt19937& rng) {
  // Keep conv inits, but push bn shifts near 1 so pooled branches spike and
  // give every theta/scale a nonzero operating point.
  std::uniform_real_distribution<float> near_one(0.8f, 1.2f);
  for (auto& [name, t] : r.params) {
    if (name.find(".shift") != std::string::npos ||
        name.find(".scale") != std::string::npos ||
        name.find(".theta") != std::string::npos)
      for (auto& v : t.values()) v = near_one(rng);
  }
}

// Finite differences of a frozen-spike forward against the tape backward.
template <typename F>
double frozen_fd_err(Tensor& x, F fwd) {
  std::mt19937 rng(1234);
  Tensor warm = fwd();  // hard pass builds every neuron cache
  Tensor proj(warm.shape());
  testutil::fill_uniform(proj, rng, 0.1f, 1.0f);

  set_frozen_spike_mode(true);
  auto loss = [&]() { return double(op::sum_all(op::mul(fwd(), proj)).item()); };
  x.zero_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor l = op::sum_all(op::mul(fwd(), proj));
    tape.backward(l);
  }
  auto fd = testutil::finite_diff(x, loss, 5e-3f);
  set_frozen_spike_mode(false);
  return testutil::max_grad_err(x.grad(), fd);
}

}  // namespace

// ---------------------------------------------------------------------------
// FDM

TEST_CASE("fdm: zero input stays zero") {
  ParamRegistry r;
  FdmBlock fdm(r, "fdm", default_cfg());
  Tensor x(Shape::t5(2, 1, 3, 4, 4));
  Tensor y = fdm.forward(x);
  for (float v : y.values()) CHECK(v == 0.0f);
}

TEST_CASE("fdm: sub-threshold input reduces to alpha_h * x") {
  ParamRegistry r;
  NeuronConfig cfg;
  cfg.v_th = 1.0f;
  FdmBlock fdm(r, "fdm", cfg);
  fdm.alpha_h.values() = {0.25f};
  Tensor x(Shape::t5(1, 1, 2, 3, 3));
  for (auto& v : x.values()) v = 0.3f;  // never crosses v_th at T=1
  Tensor y = fdm.forward(x);
  for (float v : y.values()) CHECK(v == doctest::Approx(0.25f * 0.3f));
}

TEST_CASE("fdm: saturated input hand value") {
  ParamRegistry r;
  FdmBlock fdm(r, "fdm", default_cfg());
  fdm.alpha_l.values() = {0.7f};
  fdm.alpha_h.values() = {0.25f};
  Tensor x(Shape::t5(1, 1, 1, 2, 2));
  for (auto& v : x.values()) v = 2.0f;  // fires everywhere, X_l = 1
  Tensor y = fdm.forward(x);
  // alpha_l*1 + alpha_h*(2-1) + 2*1
  for (float v : y.values()) CHECK(v == doctest::Approx(0.7f + 0.25f + 2.0f));
}

TEST_CASE("fdm: exact low/high decomposition") {
  NeuronConfig cfg;
  std::mt19937 rng(5);
  Tensor x(Shape::t5(3, 2, 2, 5, 5));
  testutil::fill_uniform(x, rng, -1.0f, 2.0f);
  Tensor xl = binary_lif_forward(x, cfg);
  Tensor xh = op::sub(x, xl);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    CHECK(std::fabs(xl.data()[i] + xh.data()[i] - x.data()[i]) < 1e-6f);
    CHECK((xl.data()[i] == 0.0f || xl.data()[i] == 1.0f));
  }
}

TEST_CASE("fdm: frozen-spike gradient check") {
  ParamRegistry r;
  FdmBlock fdm(r, "fdm", default_cfg());
  std::mt19937 rng(17);
  Tensor x(Shape::t5(2, 1, 4, 8, 8), true);
  testutil::fill_uniform(x, rng, -0.5f, 1.5f);
  CHECK(frozen_fd_err(x, [&]() { return fdm.forward(x); }) < 1e-2);
}

// ---------------------------------------------------------------------------
// MDA

TEST_CASE("mda: shape preserved and zero input stays zero") {
  ParamRegistry r;
  MdaBlock mda(r, "mda", 8, 4);
  Tensor z(Shape::t5(4, 2, 8, 6, 6));
  Tensor y = mda.forward(z);
  CHECK(y.shape() == z.shape());
  for (float v : y.values()) CHECK(v == 0.0f);
}

TEST_CASE("mda: saturated-open gates pass the input through") {
  ParamRegistry r;
  MdaBlock mda(r, "mda", 4, 2);
  for (auto& v : mda.tb2.values()) v = 20.0f;
  for (auto& v : mda.cb2.values()) v = 20.0f;
  for (auto& v : mda.spatial.w.values()) v = 0.0f;
  mda.spatial.w.values()[std::size_t(3 * 7 + 3)] = 50.0f;  // centre tap only

  std::mt19937 rng(23);
  Tensor x(Shape::t5(2, 1, 4, 5, 5));
  testutil::fill_uniform(x, rng, 0.5f, 1.0f);  // positive keeps spatial gate open
  Tensor y = mda.forward(x);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(std::fabs(y.data()[i] - x.data()[i]) < 1e-3f);
}

TEST_CASE("mda: matches a scalar gate oracle") {
  ParamRegistry r;
  const int t = 2, b = 1, c = 4, h = 2, w = 2;
  MdaBlock mda(r, "mda", c, t);
  std::mt19937 rng(29);
  for (auto& [name, p] : r.params) testutil::fill_uniform(p, rng, -0.6f, 0.6f);

  Tensor x(Shape::t5(t, b, c, h, w));
  testutil::fill_uniform(x, rng, -1.0f, 1.0f);
  Tensor y = mda.forward(x);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto silu = [&](double v) { return v * sig(v); };
  auto mlp = [&](const std::vector<double>& in, const Tensor& w1, const Tensor& b1,
                 const Tensor& w2, const Tensor& b2) {
    const int hsz = w1.shape().d[0], n = w1.shape().d[1], m = w2.shape().d[0];
    std::vector<double> hid(std::size_t(hsz), 0.0), out(std::size_t(m), 0.0);
    for (int i = 0; i < hsz; ++i) {
      double s = b1.data()[i];
      for (int j = 0; j < n; ++j) s += double(w1.data()[i * n + j]) * in[std::size_t(j)];
      hid[std::size_t(i)] = silu(s);
    }
    for (int i = 0; i < m; ++i) {
      double s = b2.data()[i];
      for (int j = 0; j < hsz; ++j) s += double(w2.data()[i * hsz + j]) * hid[std::size_t(j)];
      out[std::size_t(i)] = sig(s);
    }
    return out;
  };
  auto idx = [&](int ti, int ci, int yi, int xi) {
    return std::size_t(((ti * c) + ci) * h + yi) * w + xi;
  };

  // temporal gate
  std::vector<double> tmean(std::size_t(t), 0.0);
  for (int ti = 0; ti < t; ++ti) {
    for (int ci = 0; ci < c; ++ci)
      for (int yi = 0; yi < h; ++yi)
        for (int xi = 0; xi < w; ++xi) tmean[std::size_t(ti)] += x.data()[idx(ti, ci, yi, xi)];
    tmean[std::size_t(ti)] /= double(c * h * w);
  }
  auto gt = mlp(tmean, mda.tw1, mda.tb1, mda.tw2, mda.tb2);
  std::vector<double> x1(std::size_t(x.numel()), 0.0);
  for (int ti = 0; ti < t; ++ti)
    for (int ci = 0; ci < c; ++ci)
      for (int yi = 0; yi < h; ++yi)
        for (int xi = 0; xi < w; ++xi)
          x1[idx(ti, ci, yi, xi)] = double(x.data()[idx(ti, ci, yi, xi)]) * gt[std::size_t(ti)];

  // channel gate
  std::vector<double> cmean(std::size_t(c), 0.0);
  for (int ci = 0; ci < c; ++ci) {
    for (int ti = 0; ti < t; ++ti)
      for (int yi = 0; yi < h; ++yi)
        for (int xi = 0; xi < w; ++xi) cmean[std::size_t(ci)] += x1[idx(ti, ci, yi, xi)];
    cmean[std::size_t(ci)] /= double(t * h * w);
  }
  auto gc = mlp(cmean, mda.cw1, mda.cb1, mda.cw2, mda.cb2);
  std::vector<double> x2(x1.size());
  for (int ti = 0; ti < t; ++ti)
    for (int ci = 0; ci < c; ++ci)
      for (int yi = 0; yi < h; ++yi)
        for (int xi = 0; xi < w; ++xi)
          x2[idx(ti, ci, yi, xi)] = x1[idx(ti, ci, yi, xi)] * gc[std::size_t(ci)];

  // spatial gate: 7x7 zero-padded conv over the channel-mean map
  std::vector<double> smap(std::size_t(t) * h * w, 0.0);
  for (int ti = 0; ti < t; ++ti)
    for (int yi = 0; yi < h; ++yi)
      for (int xi = 0; xi < w; ++xi) {
        double m = 0.0;
        for (int ci = 0; ci < c; ++ci) m += x2[idx(ti, ci, yi, xi)];
        smap[std::size_t(ti * h + yi) * w + xi] = m / double(c);
      }
  for (int ti = 0; ti < t; ++ti)
    for (int ci = 0; ci < c; ++ci)
      for (int yi = 0; yi < h; ++yi)
        for (int xi = 0; xi < w; ++xi) {
          double pre = 0.0;
          for (int dy = 0; dy < 7; ++dy)
            for (int dx = 0; dx < 7; ++dx) {
              const int sy = yi + dy - 3, sx = xi + dx - 3;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              pre += double(mda.spatial.w.data()[dy * 7 + dx]) *
                     smap[std::size_t(ti * h + sy) * w + sx];
            }
          const double expect = x2[idx(ti, ci, yi, xi)] * sig(pre);
          CHECK(y.data()[idx(ti, ci, yi, xi)] == doctest::Approx(float(expect)).epsilon(1e-4));
        }
}

// ---------------------------------------------------------------------------
// MPLB

TEST_CASE("mplb: shape law and channel divisibility error") {
  ParamRegistry r;
  MplbBlock mplb(r, "mplb", 8, default_cfg());
  std::mt19937 rng(31);
  Tensor x(Shape::t5(4, 2, 8, 16, 16));
  testutil::fill_uniform(x, rng);
  Tensor y = mplb.forward(x, true);
  CHECK(y.shape() == x.shape());

  ParamRegistry r2;
  CHECK_THROWS_AS(MplbBlock(r2, "bad", 6, default_cfg()), ShapeError);
}

TEST_CASE("mplb: dead network stays dead") {
  ParamRegistry r;
  MplbBlock mplb(r, "mplb", 8, default_cfg());
  Tensor x(Shape::t5(2, 1, 8, 8, 8));
  Tensor y = mplb.forward(x, true);
  for (float v : y.values()) CHECK(v == 0.0f);
}

TEST_CASE("mplb: zeroed theta detaches exactly its branch") {
  std::mt19937 rng(37);
  ParamRegistry r;
  MplbBlock mplb(r, "mplb", 8, default_cfg());
  randomize_block_params(r, rng);
  const int c4 = 2;

  Tensor x(Shape::t5(2, 1, 8, 8, 8));
  testutil::fill_uniform(x, rng, 0.0f, 2.0f);

  // zero theta_2..theta_4: output must depend only on the pixel branch
  for (int i = 1; i < 4; ++i)
    for (auto& v : mplb.theta[i].values()) v = 0.0f;
  Tensor base = mplb.forward(x, true);

  Tensor xp = Tensor::from(x.shape(), x.values());
  std::uniform_real_distribution<float> d(-0.5f, 0.5f);
  for (int t = 0; t < 2; ++t)
    for (int c = c4; c < 8; ++c)  // all coarse-branch channels
      for (int h = 0; h < 8; ++h)
        for (int w = 0; w < 8; ++w) xp.at(t, 0, c, h, w) += d(rng);
  Tensor pert = mplb.forward(xp, true);
  CHECK(base.values() == pert.values());  // bitwise

  // restore theta_3, theta_4: branch 2 stays detached but branch 3 now counts
  for (auto& v : mplb.theta[2].values()) v = 1.0f;
  for (auto& v : mplb.theta[3].values()) v = 1.0f;
  Tensor base2 = mplb.forward(x, true);
  Tensor x2 = Tensor::from(x.shape(), x.values());
  for (int t = 0; t < 2; ++t)
    for (int c = c4; c < 2 * c4; ++c)  // branch-2 slice only
      for (int h = 0; h < 8; ++h)
        for (int w = 0; w < 8; ++w) x2.at(t, 0, c, h, w) += d(rng);
  CHECK(mplb.forward(x2, true).values() == base2.values());

  Tensor x3 = Tensor::from(x.shape(), x.values());
  for (int t = 0; t < 2; ++t)
    for (int c = 2 * c4; c < 3 * c4; ++c)  // branch-3 slice: must matter again
      for (int h = 0; h < 8; ++h)
        for (int w = 0; w < 8; ++w) x3.at(t, 0, c, h, w) += 0.5f;
  CHECK(mplb.forward(x3, true).values() != base2.values());
}

TEST_CASE("mplb: frozen-spike gradient check") {
  std::mt19937 rng(41);
  ParamRegistry r;
  MplbBlock mplb(r, "mplb", 8, default_cfg());
  randomize_block_params(r, rng);
  Tensor x(Shape::t5(2, 1, 8, 8, 8), true);
  testutil::fill_uniform(x, rng, 0.0f, 1.5f);
  // eval-mode bn: batch-statistic backward is FD-checked separately where the
  // population is big enough for central differences to be meaningful
  CHECK(frozen_fd_err(x, [&]() { return mplb.forward(x, false); }) < 1e-2);
}

// ---------------------------------------------------------------------------
// SRB

TEST_CASE("srb: shape law") {
  ParamRegistry r;
  SrbBlock srb(r, "srb", 8, 4, default_cfg(), true, true, true);
  std::mt19937 rng(43);
  Tensor x(Shape::t5(4, 1, 8, 16, 16));
  testutil::fill_uniform(x, rng, 0.0f, 1.0f);
  Tensor y = srb.forward(x, true);
  CHECK(y.shape() == x.shape());
}

TEST_CASE("srb: outer residual identity with dead weights") {
  ParamRegistry r;
  SrbBlock srb(r, "srb", 4, 2, default_cfg(), true, false, true);
  for (auto& [name, p] : r.params)
    if (name.size() > 2 && name.substr(name.size() - 2) == ".w")
      for (auto& v : p.values()) v = 0.0f;
  std::mt19937 rng(47);
  Tensor x(Shape::t5(2, 1, 4, 8, 8));
  testutil::fill_uniform(x, rng, 0.0f, 1.0f);
  Tensor y = srb.forward(x, true);
  CHECK(y.values() == x.values());  // exact
}

TEST_CASE("srb: ablation (a) equals a hand-assembled conv+tdbn residual") {
  ParamRegistry r;
  SrbBlock srb(r, "srb", 8, 2, default_cfg(), false, false, false);
  std::mt19937 rng(53);
  for (auto& [name, p] : r.params)
    if (name.find(".w") != std::string::npos) testutil::fill_uniform(p, rng, -0.3f, 0.3f);

  Tensor x(Shape::t5(2, 1, 8, 8, 8));
  testutil::fill_uniform(x, rng, 0.0f, 1.0f);
  Tensor got = srb.forward(x, false);  // eval: running stats are read-only

  Tensor h = tdbn(op::conv2d(x, srb.entry_conv.w, 1, 1), srb.entry_bn.p, false);
  Tensor z = tdbn(op::conv2d(h, srb.exit_conv.w, 1, 1), srb.exit_bn.p, false);
  Tensor sc = tdbn(op::conv2d(x, srb.shortcut_conv.w, 1, 0), srb.shortcut_bn.p, false);
  Tensor want = op::add(op::add(z, sc), x);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-6));
}

TEST_CASE("srb: every parameter receives gradient at init") {
  for (unsigned seed : {101u, 202u, 303u, 404u, 505u}) {
    std::mt19937 rng(seed);
    ParamRegistry r;
    r.rng.seed(seed);
    SrbBlock srb(r, "srb", 8, 2, default_cfg(), true, true, true);
    randomize_block_params(r, rng);

    Tensor x(Shape::t5(2, 1, 8, 8, 8));
    testutil::fill_uniform(x, rng, 0.2f, 1.2f);
    Tensor target(x.shape());
    testutil::fill_uniform(target, rng, 0.0f, 1.0f);

    Tape tape;
    {
      Tape::Scope scope(tape);
      Tensor y = srb.forward(x, true);
      Tensor loss = op::l1_mean(y, target);
      tape.backward(loss);
    }
    for (auto& [name, p] : r.params) {
      double mag = 0.0;
      for (std::int64_t i = 0; i < p.numel(); ++i) mag += std::fabs(double(p.grad()[i]));
      INFO("seed ", seed, " param ", name);
      CHECK(mag > 0.0);
    }
  }
}

TEST_CASE("srb: frozen-spike gradient check") {
  std::mt19937 rng(59);
  ParamRegistry r;
  r.rng.seed(59);
  SrbBlock srb(r, "srb", 8, 2, default_cfg(), true, true, true);
  randomize_block_params(r, rng);
  Tensor x(Shape::t5(2, 1, 8, 8, 8), true);
  testutil::fill_uniform(x, rng, 0.2f, 1.2f);
  CHECK(frozen_fd_err(x, [&]() { return srb.forward(x, false); }) < 1e-2);
}

// ---------------------------------------------------------------------------
// Patch embed & resolution changers

TEST_CASE("patch embed: shape, dead input, eval linearity") {
  ParamRegistry r;
  PatchEmbed pe(r, "embed", 3, 16, 1.0f);
  Tensor z(Shape::t5(4, 1, 3, 16, 16));
  Tensor y0 = pe.forward(z, true);
  CHECK(y0.shape() == Shape::t5(4, 1, 16, 16, 16));
  for (float v : y0.values()) CHECK(v == 0.0f);  // shift is zero at init

  // frozen statistics (eval at init: mean 0, var 1, shift 0) => linear map
  std::mt19937 rng(61);
  Tensor a(z.shape()), b(z.shape()), combo(z.shape());
  testutil::fill_uniform(a, rng);
  testutil::fill_uniform(b, rng);
  for (std::int64_t i = 0; i < a.numel(); ++i)
    combo.data()[i] = 0.3f * a.data()[i] - 1.7f * b.data()[i];
  Tensor fa = pe.forward(a, false), fb = pe.forward(b, false), fc = pe.forward(combo, false);
  for (std::int64_t i = 0; i < fa.numel(); ++i)
    CHECK(fc.data()[i] ==
          doctest::Approx(0.3f * fa.data()[i] - 1.7f * fb.data()[i]).epsilon(1e-4));
}

TEST_CASE("down/up: shape laws, dead input, odd-size error") {
  ParamRegistry r;
  Downsample down(r, "down", 8, default_cfg());
  UpsampleBlock up(r, "up", 16, default_cfg());
  std::mt19937 rng(67);
  Tensor x(Shape::t5(4, 1, 8, 32, 32));
  testutil::fill_uniform(x, rng, 0.0f, 2.0f);

  Tensor d = down.forward(x, true);
  CHECK(d.shape() == Shape::t5(4, 1, 16, 16, 16));
  Tensor u = up.forward(d, true);
  CHECK(u.shape() == x.shape());  // down then up restores the shape

  Tensor z(Shape::t5(2, 1, 8, 8, 8));
  Tensor dz = down.forward(z, true);
  for (float v : dz.values()) CHECK(v == 0.0f);

  Tensor odd(Shape::t5(2, 1, 8, 7, 8));
  CHECK_THROWS_AS(down.forward(odd, true), ShapeError);
}

// ---------------------------------------------------------------------------
// Spike-map export

TEST_CASE("spike maps land as valid pgm files") {
  NeuronConfig cfg;
  SpikeNeuron n("probe", cfg);
  n.set_record_stats(true);
  std::mt19937 rng(71);
  Tensor x(Shape::t5(2, 1, 4, 6, 6));
  testutil::fill_uniform(x, rng, 0.0f, 6.0f);
  n.forward(x);
  REQUIRE(n.has_cache());

  const fs::path outdir = fs::temp_directory_path() / "uiesnn_spikemaps";
  fs::remove_all(outdir);
  dump_spike_maps(n.last_spikes(), n.last_shape(), outdir.string(), "enc1", "branch1");

  for (int t = 0; t < 2; ++t) {
    const fs::path f = outdir / "enc1" / ("branch1_t" + std::to_string(t) + ".pgm");
    REQUIRE(fs::exists(f));
    std::ifstream in(f, std::ios::binary);
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    in >> magic >> w >> h >> maxv;
    CHECK(magic == "P5");
    CHECK(maxv == 255);
    CHECK(w == 2 * 6);  // 4 channels tile into a 2x2 grid
    CHECK(h == 2 * 6);
    in.get();  // single whitespace after the header
    std::vector<unsigned char> pix(std::size_t(w) * h);
    in.read(reinterpret_cast<char*>(pix.data()), std::streamsize(pix.size()));
    CHECK(in.gcount() == std::streamsize(pix.size()));
    // spikes are m/D with D=4: only the five quantised gray levels appear
    for (unsigned char p : pix)
      CHECK((p == 0 || p == 64 || p == 128 || p == 191 || p == 255));
  }
  fs::remove_all(outdir);
}

#include "uiesnn/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "uiesnn/ops.hpp"

namespace uiesnn {

namespace op = ops;

// ---------------------------------------------------------------------------
// ParamRegistry

void ParamRegistry::check_unique(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) throw UsageError("duplicate parameter name: " + name);
  for (const auto& [n, t] : buffers)
    if (n == name) throw UsageError("duplicate buffer name: " + name);
}

Tensor ParamRegistry::param(const std::string& name, Shape s, float bound) {
  check_unique(name);
  Tensor t(std::move(s), true);
  if (bound > 0.0f) {
    std::uniform_real_distribution<float> d(-bound, bound);
    for (auto& v : t.values()) v = d(rng);
  }
  params.emplace_back(name, t);
  return t;
}

Tensor ParamRegistry::param_const(const std::string& name, Shape s, float value) {
  check_unique(name);
  Tensor t(std::move(s), true);
  for (auto& v : t.values()) v = value;
  params.emplace_back(name, t);
  return t;
}

Tensor ParamRegistry::buffer(const std::string& name, Shape s, float value) {
  check_unique(name);
  Tensor t(std::move(s), false);
  for (auto& v : t.values()) v = value;
  buffers.emplace_back(name, t);
  return t;
}

Tensor* ParamRegistry::find_param(const std::string& name) {
  for (auto& [n, t] : params)
    if (n == name) return &t;
  return nullptr;
}

Tensor* ParamRegistry::find_buffer(const std::string& name) {
  for (auto& [n, t] : buffers)
    if (n == name) return &t;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Conv / tdBN layers

Conv2dLayer::Conv2dLayer(ParamRegistry& r, std::string nm, int cin, int cout,
                         int kk, int st, int pd, float init_bound)
    : name(std::move(nm)), in_ch(cin), out_ch(cout), k(kk), stride(st), pad(pd) {
  const float bound = init_bound >= 0.0f
                          ? init_bound
                          : std::sqrt(1.0f / (float(cin) * float(kk) * float(kk)));
  w = r.param(name + ".w", Shape{cout, cin, kk, kk}, bound);
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  Tensor y = op::conv2d(x, w, stride, pad);
  last_out_h = y.shape().h();
  last_out_w = y.shape().w();
  return y;
}

TdBnLayer::TdBnLayer(ParamRegistry& r, const std::string& name, int c,
                     float v_th, float alpha_bn) {
  p.scale = r.param_const(name + ".scale", Shape{c}, 1.0f);
  p.shift = r.param_const(name + ".shift", Shape{c}, 0.0f);
  p.running_mean = r.buffer(name + ".running_mean", Shape{c}, 0.0f);
  p.running_var = r.buffer(name + ".running_var", Shape{c}, 1.0f);
  p.v_th_link = v_th;
  p.alpha_bn = alpha_bn;
}

// ---------------------------------------------------------------------------
// FDM

FdmBlock::FdmBlock(ParamRegistry& r, const std::string& name,
                   const NeuronConfig& cfg)
    : lif(name + ".lif", cfg, /*binary=*/true) {
  alpha_l = r.param_const(name + ".alpha_l", Shape{1}, 1.0f);
  alpha_h = r.param_const(name + ".alpha_h", Shape{1}, 1.0f);
}

Tensor FdmBlock::forward(const Tensor& x) {
  Tensor xl = lif.forward(x);
  Tensor xh = op::sub(x, xl);
  Tensor low = op::mul_scalar_param(xl, alpha_l);
  Tensor high = op::mul_scalar_param(xh, alpha_h);
  return op::add(op::add(low, high), op::mul(x, xl));
}

// ---------------------------------------------------------------------------
// MDA

MdaBlock::MdaBlock(ParamRegistry& r, const std::string& name, int c, int t) {
  const int th = std::max(1, t / 4);
  const int ch = std::max(1, c / 4);
  const float bt = std::sqrt(1.0f / float(t)), bth = std::sqrt(1.0f / float(th));
  const float bc = std::sqrt(1.0f / float(c)), bch = std::sqrt(1.0f / float(ch));
  tw1 = r.param(name + ".tw1", Shape{th, t}, bt);
  tb1 = r.param(name + ".tb1", Shape{th}, 0.0f);
  tw2 = r.param(name + ".tw2", Shape{t, th}, bth);
  tb2 = r.param(name + ".tb2", Shape{t}, 0.0f);
  cw1 = r.param(name + ".cw1", Shape{ch, c}, bc);
  cb1 = r.param(name + ".cb1", Shape{ch}, 0.0f);
  cw2 = r.param(name + ".cw2", Shape{c, ch}, bch);
  cb2 = r.param(name + ".cb2", Shape{c}, 0.0f);
  spatial = Conv2dLayer(r, name + ".spatial", 1, 1, 7, 1, 3);
}

namespace {
// Smooth bottleneck activation; never kills the gradient of an inactive
// unit the way a ReLU would at init.
Tensor silu(const Tensor& x) { return op::mul(x, op::sigmoid(x)); }
}  // namespace

Tensor MdaBlock::forward(const Tensor& x) {
  Tensor gt = op::sigmoid(op::linear(
      silu(op::linear(op::mean_over_bchw(x), tw1, tb1)), tw2, tb2));
  Tensor x1 = op::mul_time(x, gt);
  Tensor gc = op::sigmoid(op::linear(
      silu(op::linear(op::mean_over_tbhw(x1), cw1, cb1)), cw2, cb2));
  Tensor x2 = op::mul_channel(x1, gc);
  Tensor gs = op::sigmoid(spatial.forward(op::mean_over_c(x2)));
  return op::mul_spatial(x2, gs);
}

// ---------------------------------------------------------------------------
// MPLB

MplbBlock::MplbBlock(ParamRegistry& r, const std::string& name, int cc,
                     const NeuronConfig& cfg)
    : c(cc) {
  if (cc % 4 != 0)
    throw ShapeError("mplb " + name + ": C=" + std::to_string(cc) +
                     " not divisible by 4");
  const int c4 = cc / 4;
  for (int i = 0; i < 4; ++i) {
    const std::string b = name + ".branch" + std::to_string(i + 1);
    lif[i] = SpikeNeuron(b + ".lif", cfg);
    branch_conv[i] = Conv2dLayer(r, b + ".conv", c4, c4, 1, 1, 0);
    branch_bn[i] = TdBnLayer(r, b + ".bn", c4, cfg.v_th);
    theta[i] = r.param_const(name + ".theta" + std::to_string(i + 1),
                             Shape{c4}, 1.0f);
  }
  for (int i = 0; i < 3; ++i) {
    const std::string m = name + ".phi" + std::to_string(i + 1);
    phi_conv[i] = Conv2dLayer(r, m + ".conv", 2 * c4, c4, 1, 1, 0);
    phi_bn[i] = TdBnLayer(r, m + ".bn", c4, cfg.v_th);
  }
  fuse_conv = Conv2dLayer(r, name + ".fuse.conv", cc, cc, 3, 1, 1);
  fuse_bn = TdBnLayer(r, name + ".fuse.bn", cc, cfg.v_th);
}

Tensor MplbBlock::forward(const Tensor& x, bool training) {
  const Shape& xs = x.shape();
  if (xs.c() != c)
    throw ShapeError("mplb: expected C=" + std::to_string(c) + ", got " +
                     xs.str());
  if (xs.h() < 4 || xs.w() < 4)
    throw ShapeError("mplb: spatial size below 4x4: " + xs.str());
  const int h = xs.h(), w = xs.w();
  auto parts = op::channel_split4(x);

  Tensor f[4];
  for (int i = 0; i < 4; ++i) {
    Tensor pooled;
    switch (i) {
      case 0: pooled = parts[0]; break;
      case 1: pooled = op::avgpool2d(parts[1], 4); break;
      case 2: pooled = op::avgpool2d(parts[2], 2); break;
      default: pooled = op::adaptive_gap(parts[3]); break;
    }
    Tensor s = lif[i].forward(pooled);
    Tensor proj = branch_bn[i].forward(branch_conv[i].forward(s), training);
    f[i] = (proj.shape().h() == h && proj.shape().w() == w)
               ? proj
               : op::upsample_nearest(proj, h, w);
  }

  Tensor m[3];
  for (int i = 0; i < 3; ++i) {
    Tensor mix = op::channel_concat({f[0], f[i + 1]});
    m[i] = phi_bn[i].forward(phi_conv[i].forward(mix), training);
  }

  Tensor z = op::channel_concat({op::mul_channel(f[0], theta[0]),
                                 op::mul_channel(m[0], theta[1]),
                                 op::mul_channel(m[1], theta[2]),
                                 op::mul_channel(m[2], theta[3])});
  return fuse_bn.forward(fuse_conv.forward(z), training);
}

void MplbBlock::for_each_conv(const ConvVisitor& v) const {
  for (int i = 0; i < 4; ++i)
    v(branch_conv[i].name, branch_conv[i], &lif[i]);
  for (int i = 0; i < 3; ++i) v(phi_conv[i].name, phi_conv[i], nullptr);
  v(fuse_conv.name, fuse_conv, nullptr);
}

void MplbBlock::for_each_neuron(const NeuronVisitor& v) {
  for (auto& n : lif) v(n);
}

// ---------------------------------------------------------------------------
// SRB

SrbBlock::SrbBlock(ParamRegistry& r, const std::string& name, int c, int t,
                   const NeuronConfig& cfg, bool fdm_on, bool mda_on,
                   bool mplb_on)
    : use_fdm(fdm_on), use_mda(mda_on), use_mplb(mplb_on) {
  if (use_fdm) fdm = FdmBlock(r, name + ".fdm", cfg);
  entry_conv = Conv2dLayer(r, name + ".entry.conv", c, c, 3, 1, 1);
  entry_bn = TdBnLayer(r, name + ".entry.bn", c, cfg.v_th);
  if (use_mplb) mplb = MplbBlock(r, name + ".mplb", c, cfg);
  exit_conv = Conv2dLayer(r, name + ".exit.conv", c, c, 3, 1, 1);
  exit_bn = TdBnLayer(r, name + ".exit.bn", c, cfg.v_th);
  shortcut_conv = Conv2dLayer(r, name + ".shortcut.conv", c, c, 1, 1, 0);
  shortcut_bn = TdBnLayer(r, name + ".shortcut.bn", c, cfg.v_th);
  if (use_mda) mda = MdaBlock(r, name + ".mda", c, t);
}

Tensor SrbBlock::forward(const Tensor& x, bool training) {
  Tensor xt = use_fdm ? fdm.forward(x) : x;
  Tensor h = entry_bn.forward(entry_conv.forward(xt), training);
  Tensor h2 = use_mplb ? mplb.forward(h, training) : h;
  Tensor z = exit_bn.forward(exit_conv.forward(h2), training);
  Tensor sc = shortcut_bn.forward(shortcut_conv.forward(x), training);
  Tensor y = op::add(z, sc);
  if (use_mda) y = mda.forward(y);
  return op::add(y, x);
}

void SrbBlock::for_each_conv(const ConvVisitor& v) const {
  v(entry_conv.name, entry_conv, nullptr);
  if (use_mplb) mplb.for_each_conv(v);
  v(exit_conv.name, exit_conv, nullptr);
  v(shortcut_conv.name, shortcut_conv, nullptr);
  if (use_mda) v(mda.spatial.name, mda.spatial, nullptr);
}

void SrbBlock::for_each_neuron(const NeuronVisitor& v) {
  if (use_fdm) fdm.for_each_neuron(v);
  if (use_mplb) mplb.for_each_neuron(v);
}

// ---------------------------------------------------------------------------
// Embedding / resolution changers

PatchEmbed::PatchEmbed(ParamRegistry& r, const std::string& name, int cin,
                       int cout, float v_th) {
  conv = Conv2dLayer(r, name + ".conv", cin, cout, 3, 1, 1);
  bn = TdBnLayer(r, name + ".bn", cout, v_th);
}

Tensor PatchEmbed::forward(const Tensor& x, bool training) {
  return bn.forward(conv.forward(x), training);
}

Downsample::Downsample(ParamRegistry& r, const std::string& name, int c,
                       const NeuronConfig& cfg)
    : lif(name + ".lif", cfg) {
  conv = Conv2dLayer(r, name + ".conv", c, 2 * c, 3, 2, 1);
  bn = TdBnLayer(r, name + ".bn", 2 * c, cfg.v_th);
}

Tensor Downsample::forward(const Tensor& x, bool training) {
  const Shape& xs = x.shape();
  if (xs.h() % 2 != 0 || xs.w() % 2 != 0)
    throw ShapeError("downsample: odd spatial size " + xs.str());
  return bn.forward(conv.forward(lif.forward(x)), training);
}

UpsampleBlock::UpsampleBlock(ParamRegistry& r, const std::string& name, int c,
                             const NeuronConfig& cfg)
    : lif(name + ".lif", cfg) {
  if (c % 2 != 0) throw ShapeError("upsample: odd channel count");
  conv = Conv2dLayer(r, name + ".conv", c, c / 2, 3, 1, 1);
  bn = TdBnLayer(r, name + ".bn", c / 2, cfg.v_th);
}

Tensor UpsampleBlock::forward(const Tensor& x, bool training) {
  Tensor s = lif.forward(x);
  Tensor up = op::upsample_nearest(s, 2 * x.shape().h(), 2 * x.shape().w());
  return bn.forward(conv.forward(up), training);
}

// ---------------------------------------------------------------------------
// Spike-map export

void dump_spike_maps(const std::vector<float>& spikes, const Shape& shape,
                     const std::string& outdir, const std::string& block,
                     const std::string& branch) {
  if (shape.rank() != 5) throw ShapeError("spike map expects a rank-5 tensor");
  const int t = shape.t(), c = shape.c(), h = shape.h(), w = shape.w();
  const std::size_t plane = std::size_t(h) * w;
  const int cols = int(std::ceil(std::sqrt(double(c))));
  const int rows = (c + cols - 1) / cols;
  const int img_h = rows * h, img_w = cols * w;

  namespace fs = std::filesystem;
  const fs::path dir = fs::path(outdir) / block;
  fs::create_directories(dir);

  std::vector<unsigned char> img(std::size_t(img_h) * img_w);
  for (int ti = 0; ti < t; ++ti) {
    std::fill(img.begin(), img.end(), 0);
    // batch item 0 only: channels tiled row-major into the grid
    const std::size_t base = std::size_t(ti) * shape.b() * c * plane;
    for (int ci = 0; ci < c; ++ci) {
      const int gy = (ci / cols) * h, gx = (ci % cols) * w;
      const float* src = spikes.data() + base + std::size_t(ci) * plane;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          float v = std::clamp(src[std::size_t(y) * w + x], 0.0f, 1.0f);
          img[std::size_t(gy + y) * img_w + gx + x] =
              static_cast<unsigned char>(std::lround(v * 255.0f));
        }
    }
    char name[64];
    std::snprintf(name, sizeof(name), "%s_t%d.pgm", branch.c_str(), ti);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw UsageError("cannot write spike map under " + dir.string());
    out << "P5\n" << img_w << " " << img_h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data()),
              std::streamsize(img.size()));
  }
}

}  // namespace uiesnn

#include "uiesnn/network.hpp"

#include <cstring>
#include <fstream>

#include "uiesnn/ops.hpp"

namespace uiesnn {

namespace op = ops;

void NetConfig::validate() const {
  if (timesteps < 1) throw ParameterError("NetConfig: timesteps must be >= 1");
  if (d_levels < 1) throw ParameterError("NetConfig: d_levels must be >= 1");
  if (base_channels < 4 || base_channels % 4 != 0)
    throw ParameterError("NetConfig: base_channels must be a positive multiple of 4");
  for (int n : stage_layout)
    if (n < 0) throw ParameterError("NetConfig: stage_layout entries must be >= 0");
  NeuronConfig n = neuron;
  n.d_levels = d_levels;
  n.validate();
}

namespace {

std::vector<SrbBlock> make_stack(ParamRegistry& r, const std::string& prefix,
                                 int count, int c, const NetConfig& cfg,
                                 const NeuronConfig& ncfg) {
  std::vector<SrbBlock> blocks;
  blocks.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i)
    blocks.emplace_back(r, prefix + ".srb" + std::to_string(i), c,
                        cfg.timesteps, ncfg, cfg.use_fdm, cfg.use_mda,
                        cfg.use_mplb);
  return blocks;
}

}  // namespace

Model::Model(NetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  NeuronConfig ncfg = cfg_.neuron;
  ncfg.d_levels = cfg_.d_levels;
  const int b1 = cfg_.base_channels, b2 = 2 * b1, b3 = 4 * b1;
  const int emb = b1 / 2;
  const float v_th = ncfg.v_th;

  embed_ = PatchEmbed(reg_, "embed", 3, b1, v_th);
  enc1_ = make_stack(reg_, "enc1", cfg_.stage_layout[0], b1, cfg_, ncfg);
  down1_ = Downsample(reg_, "down1", b1, ncfg);

  inject2_conv_ = Conv2dLayer(reg_, "inject2.embed", 3, emb, 3, 1, 1);
  inject2_proj_ = Conv2dLayer(reg_, "inject2.proj", b2 + emb, b2, 1, 1, 0);
  inject2_bn_ = TdBnLayer(reg_, "inject2.bn", b2, v_th);
  enc2_ = make_stack(reg_, "enc2", cfg_.stage_layout[1], b2, cfg_, ncfg);
  down2_ = Downsample(reg_, "down2", b2, ncfg);

  inject3_conv_ = Conv2dLayer(reg_, "inject3.embed", 3, emb, 3, 1, 1);
  inject3_proj_ = Conv2dLayer(reg_, "inject3.proj", b3 + emb, b3, 1, 1, 0);
  inject3_bn_ = TdBnLayer(reg_, "inject3.bn", b3, v_th);
  enc3_ = make_stack(reg_, "enc3", cfg_.stage_layout[2], b3, cfg_, ncfg);

  dec3_ = make_stack(reg_, "dec3", cfg_.stage_layout[3], b3, cfg_, ncfg);
  up2_ = UpsampleBlock(reg_, "up2", b3, ncfg);
  skip2_conv_ = Conv2dLayer(reg_, "skip2.fuse", b2 + b2, b2, 1, 1, 0);
  skip2_bn_ = TdBnLayer(reg_, "skip2.bn", b2, v_th);
  dec2_ = make_stack(reg_, "dec2", cfg_.stage_layout[4], b2, cfg_, ncfg);
  up1_ = UpsampleBlock(reg_, "up1", b2, ncfg);
  skip1_conv_ = Conv2dLayer(reg_, "skip1.fuse", b1 + b1, b1, 1, 1, 0);
  skip1_bn_ = TdBnLayer(reg_, "skip1.bn", b1, v_th);
  dec1_ = make_stack(reg_, "dec1", cfg_.stage_layout[5], b1, cfg_, ncfg);

  // heads start at zero so the global residual makes the net an identity map
  head1_ = Conv2dLayer(reg_, "head1", b1, 3, 3, 1, 1, 0.0f);
  head2_ = Conv2dLayer(reg_, "head2", b2, 3, 3, 1, 1, 0.0f);
  head3_ = Conv2dLayer(reg_, "head3", b3, 3, 3, 1, 1, 0.0f);
}

MultiScaleOutput Model::forward(const Tensor& img, bool training) {
  if (img.shape().rank() != 5 || img.shape().t() != 1 || img.shape().c() != 3)
    throw ShapeError("model: expected (1,B,3,H,W) input, got " + img.shape().str());
  const int h = img.shape().h(), w = img.shape().w();

  if (h % 4 != 0 || w % 4 != 0) {
    if (training)
      throw ShapeError("model: training input must have H,W divisible by 4, got " +
                       img.shape().str());
    const int ph = (4 - h % 4) % 4, pw = (4 - w % 4) % 4;
    Tensor padded = op::reflect_pad2d(img, 0, ph, 0, pw);
    MultiScaleOutput big = forward(padded, false);
    MultiScaleOutput out;
    out.full = op::crop2d(big.full, 0, 0, h, w);
    out.half = op::crop2d(big.half, 0, 0, (h + 1) / 2, (w + 1) / 2);
    out.quarter = op::crop2d(big.quarter, 0, 0, (h + 3) / 4, (w + 3) / 4);
    return out;
  }

  const int t = cfg_.timesteps;
  Tensor img_half = op::resize_bilinear(img, h / 2, w / 2);
  Tensor img_quarter = op::resize_bilinear(img, h / 4, w / 4);

  Tensor x = op::replicate_temporal(img, t);
  Tensor f1 = embed_.forward(x, training);
  for (auto& srb : enc1_) f1 = srb.forward(f1, training);

  Tensor f2 = down1_.forward(f1, training);
  Tensor e2 = inject2_conv_.forward(op::replicate_temporal(img_half, t));
  f2 = inject2_bn_.forward(
      inject2_proj_.forward(op::channel_concat({f2, e2})), training);
  for (auto& srb : enc2_) f2 = srb.forward(f2, training);

  Tensor f3 = down2_.forward(f2, training);
  Tensor e3 = inject3_conv_.forward(op::replicate_temporal(img_quarter, t));
  f3 = inject3_bn_.forward(
      inject3_proj_.forward(op::channel_concat({f3, e3})), training);
  for (auto& srb : enc3_) f3 = srb.forward(f3, training);

  Tensor d3 = f3;
  for (auto& srb : dec3_) d3 = srb.forward(d3, training);

  Tensor d2 = up2_.forward(d3, training);
  d2 = skip2_bn_.forward(skip2_conv_.forward(op::channel_concat({d2, f2})),
                         training);
  for (auto& srb : dec2_) d2 = srb.forward(d2, training);

  Tensor d1 = up1_.forward(d2, training);
  d1 = skip1_bn_.forward(skip1_conv_.forward(op::channel_concat({d1, f1})),
                         training);
  for (auto& srb : dec1_) d1 = srb.forward(d1, training);

  MultiScaleOutput out;
  out.full = op::add(head1_.forward(op::temporal_mean(d1)), img);
  out.half = op::add(head2_.forward(op::temporal_mean(d2)), img_half);
  out.quarter = op::add(head3_.forward(op::temporal_mean(d3)), img_quarter);
  return out;
}

std::int64_t Model::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : reg_.params) n += t.numel();
  return n;
}

void Model::for_each_conv(const ConvVisitor& v) const {
  v(embed_.conv.name, embed_.conv, nullptr);
  for (const auto& s : enc1_) s.for_each_conv(v);
  down1_.for_each_conv(v);
  v(inject2_conv_.name, inject2_conv_, nullptr);
  v(inject2_proj_.name, inject2_proj_, nullptr);
  for (const auto& s : enc2_) s.for_each_conv(v);
  down2_.for_each_conv(v);
  v(inject3_conv_.name, inject3_conv_, nullptr);
  v(inject3_proj_.name, inject3_proj_, nullptr);
  for (const auto& s : enc3_) s.for_each_conv(v);
  for (const auto& s : dec3_) s.for_each_conv(v);
  up2_.for_each_conv(v);
  v(skip2_conv_.name, skip2_conv_, nullptr);
  for (const auto& s : dec2_) s.for_each_conv(v);
  up1_.for_each_conv(v);
  v(skip1_conv_.name, skip1_conv_, nullptr);
  for (const auto& s : dec1_) s.for_each_conv(v);
  v(head1_.name, head1_, nullptr);
  v(head2_.name, head2_, nullptr);
  v(head3_.name, head3_, nullptr);
}

void Model::for_each_neuron(const NeuronVisitor& v) {
  for (auto& s : enc1_) s.for_each_neuron(v);
  down1_.for_each_neuron(v);
  for (auto& s : enc2_) s.for_each_neuron(v);
  down2_.for_each_neuron(v);
  for (auto& s : enc3_) s.for_each_neuron(v);
  for (auto& s : dec3_) s.for_each_neuron(v);
  up2_.for_each_neuron(v);
  for (auto& s : dec2_) s.for_each_neuron(v);
  up1_.for_each_neuron(v);
  for (auto& s : dec1_) s.for_each_neuron(v);
}

void Model::set_record_stats(bool on) {
  for_each_neuron([on](SpikeNeuron& n) { n.set_record_stats(on); });
}

// ---------------------------------------------------------------------------
// Checkpoint container.
//
// Layout (little endian):
//   char[4]  magic "UIES"
//   u32      version (1)
//   i32      timesteps, d_levels, base_channels
//   i32[6]   stage_layout
//   f32      gamma, v_th, surrogate_alpha
//   u8[3]    use_fdm, use_mda, use_mplb
//   u64      step
//   u32      record count
//   records: u32 name_len | name bytes | u32 rank | i32 dims[rank] | f32 data
// Records cover all learned parameters followed by all buffers.

namespace {

constexpr char kMagic[4] = {'U', 'I', 'E', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("checkpoint truncated");
  return v;
}

void write_record(std::ostream& os, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(os, std::uint32_t(name.size()));
  os.write(name.data(), std::streamsize(name.size()));
  const Shape& s = t.shape();
  put<std::uint32_t>(os, std::uint32_t(s.rank()));
  for (int d : s.d) put<std::int32_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data()),
           std::streamsize(std::size_t(t.numel()) * sizeof(float)));
}

}  // namespace

void Model::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::int32_t>(os, cfg_.timesteps);
  put<std::int32_t>(os, cfg_.d_levels);
  put<std::int32_t>(os, cfg_.base_channels);
  for (int n : cfg_.stage_layout) put<std::int32_t>(os, n);
  put<float>(os, cfg_.neuron.gamma);
  put<float>(os, cfg_.neuron.v_th);
  put<float>(os, cfg_.neuron.surrogate_alpha);
  put<std::uint8_t>(os, cfg_.use_fdm ? 1 : 0);
  put<std::uint8_t>(os, cfg_.use_mda ? 1 : 0);
  put<std::uint8_t>(os, cfg_.use_mplb ? 1 : 0);
  put<std::uint64_t>(os, std::uint64_t(step));
  put<std::uint32_t>(os, std::uint32_t(reg_.params.size() + reg_.buffers.size()));
  for (const auto& [name, t] : reg_.params) write_record(os, name, t);
  for (const auto& [name, t] : reg_.buffers) write_record(os, name, t);
  if (!os) throw UsageError("short write while saving checkpoint: " + path);
}

Model Model::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not a checkpoint file (bad magic): " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));

  NetConfig cfg;
  cfg.timesteps = get<std::int32_t>(is);
  cfg.d_levels = get<std::int32_t>(is);
  cfg.base_channels = get<std::int32_t>(is);
  for (int& n : cfg.stage_layout) n = get<std::int32_t>(is);
  cfg.neuron.gamma = get<float>(is);
  cfg.neuron.v_th = get<float>(is);
  cfg.neuron.surrogate_alpha = get<float>(is);
  cfg.neuron.d_levels = cfg.d_levels;
  cfg.use_fdm = get<std::uint8_t>(is) != 0;
  cfg.use_mda = get<std::uint8_t>(is) != 0;
  cfg.use_mplb = get<std::uint8_t>(is) != 0;
  const auto step = get<std::uint64_t>(is);
  const auto count = get<std::uint32_t>(is);

  Model m(cfg);
  m.step = std::int64_t(step);
  if (count != m.reg_.params.size() + m.reg_.buffers.size())
    throw IncompatibleCheckpointError(
        "checkpoint holds " + std::to_string(count) + " tensors, model needs " +
        std::to_string(m.reg_.params.size() + m.reg_.buffers.size()));

  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), std::streamsize(name_len));
    if (!is) throw FormatError("checkpoint truncated");
    const auto rank = get<std::uint32_t>(is);
    Shape s;
    s.d.resize(rank);
    for (auto& d : s.d) d = get<std::int32_t>(is);

    Tensor* dst = m.reg_.find_param(name);
    if (!dst) dst = m.reg_.find_buffer(name);
    if (!dst)
      throw IncompatibleCheckpointError("checkpoint tensor '" + name +
                                        "' has no slot in the model");
    if (!(dst->shape() == s))
      throw IncompatibleCheckpointError("tensor '" + name + "' has shape " +
                                        s.str() + ", model expects " +
                                        dst->shape().str());
    is.read(reinterpret_cast<char*>(dst->data()),
            std::streamsize(std::size_t(dst->numel()) * sizeof(float)));
    if (!is) throw FormatError("checkpoint truncated");
  }
  return m;
}

}  // namespace uiesnn

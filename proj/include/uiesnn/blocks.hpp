#pragma once

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "uiesnn/spiking.hpp"
#include "uiesnn/tensor.hpp"

namespace uiesnn {

// Central registry of learned parameters and persistent buffers. Blocks
// create their tensors through it so the network can enumerate, serialise
// and update everything by name.
struct ParamRegistry {
  std::mt19937 rng{0x5eedu};
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> buffers;

  // Uniform init in [-bound, bound]; bound 0 gives zeros.
  Tensor param(const std::string& name, Shape s, float bound);
  Tensor param_const(const std::string& name, Shape s, float value);
  Tensor buffer(const std::string& name, Shape s, float value);

  Tensor* find_param(const std::string& name);
  Tensor* find_buffer(const std::string& name);

 private:
  void check_unique(const std::string& name) const;
};

// Callbacks a block invokes for each conv it owns (with the neuron feeding
// it, or nullptr for densely driven convs) and for each spiking neuron.
using ConvVisitor =
    std::function<void(const std::string& name, const struct Conv2dLayer& conv,
                       const SpikeNeuron* driver)>;
using NeuronVisitor = std::function<void(SpikeNeuron& neuron)>;

// Bias-free convolution with geometry bookkeeping for the energy ledger.
struct Conv2dLayer {
  std::string name;
  Tensor w;  // Cout x Cin x k x k
  int in_ch = 0, out_ch = 0, k = 0, stride = 1, pad = 0;
  mutable int last_out_h = 0, last_out_w = 0;

  Conv2dLayer() = default;
  // init_bound < 0 selects the default fan-in uniform bound; 0 gives zeros.
  Conv2dLayer(ParamRegistry& r, std::string name, int cin, int cout, int k,
              int stride, int pad, float init_bound = -1.0f);

  Tensor forward(const Tensor& x) const;
};

struct TdBnLayer {
  TdBnParams p;

  TdBnLayer() = default;
  TdBnLayer(ParamRegistry& r, const std::string& name, int c, float v_th,
            float alpha_bn = 1.0f);

  Tensor forward(const Tensor& x, bool training) { return tdbn(x, p, training); }
};

// Frequency decomposition: a binary indicator LIF splits the input into a
// spiked low-frequency part and its residual, recombined with learned
// scalars: out = alpha_l*X_l + alpha_h*X_h + x (.) X_l, where X_h = x - X_l.
struct FdmBlock {
  Tensor alpha_l, alpha_h;  // learned scalars
  SpikeNeuron lif;

  FdmBlock() = default;
  FdmBlock(ParamRegistry& r, const std::string& name, const NeuronConfig& cfg);

  Tensor forward(const Tensor& x);
  void for_each_neuron(const NeuronVisitor& v) { v(lif); }
};

// Multi-dimensional attention: sequential squeeze-excitation gates along the
// temporal, channel and spatial axes.
struct MdaBlock {
  Tensor tw1, tb1, tw2, tb2;  // temporal bottleneck MLP
  Tensor cw1, cb1, cw2, cb2;  // channel bottleneck MLP
  Conv2dLayer spatial;        // 7x7 conv over the channel-mean map

  MdaBlock() = default;
  MdaBlock(ParamRegistry& r, const std::string& name, int c, int t);

  Tensor forward(const Tensor& x);
};

// Multi-scale parallel lightweight block: channel split into four branches
// pooled at different rates, spiked, projected, mixed pairwise with the
// pixel-level branch and fused back to the input width.
struct MplbBlock {
  int c = 0;
  SpikeNeuron lif[4];
  Conv2dLayer branch_conv[4];
  TdBnLayer branch_bn[4];
  Conv2dLayer phi_conv[3];
  TdBnLayer phi_bn[3];
  Tensor theta[4];  // per-channel reweights, length C/4
  Conv2dLayer fuse_conv;
  TdBnLayer fuse_bn;

  MplbBlock() = default;
  MplbBlock(ParamRegistry& r, const std::string& name, int c,
            const NeuronConfig& cfg);

  Tensor forward(const Tensor& x, bool training);
  void for_each_conv(const ConvVisitor& v) const;
  void for_each_neuron(const NeuronVisitor& v);
};

// Spiking residual block: FDM -> conv/tdBN -> MPLB -> conv/tdBN, added to a
// projected shortcut, refined by MDA, plus the outer identity residual.
struct SrbBlock {
  bool use_fdm = true, use_mda = true, use_mplb = true;
  FdmBlock fdm;
  Conv2dLayer entry_conv;
  TdBnLayer entry_bn;
  MplbBlock mplb;
  Conv2dLayer exit_conv;
  TdBnLayer exit_bn;
  Conv2dLayer shortcut_conv;
  TdBnLayer shortcut_bn;
  MdaBlock mda;

  SrbBlock() = default;
  SrbBlock(ParamRegistry& r, const std::string& name, int c, int t,
           const NeuronConfig& cfg, bool use_fdm, bool use_mda, bool use_mplb);

  Tensor forward(const Tensor& x, bool training);
  void for_each_conv(const ConvVisitor& v) const;
  void for_each_neuron(const NeuronVisitor& v);
};

// Shallow overlap patch embedding: 3x3 conv stride 1 pad 1 plus tdBN.
struct PatchEmbed {
  Conv2dLayer conv;
  TdBnLayer bn;

  PatchEmbed() = default;
  PatchEmbed(ParamRegistry& r, const std::string& name, int cin, int cout,
             float v_th);

  Tensor forward(const Tensor& x, bool training);
};

// NI-LIF -> 3x3 stride-2 conv (channels x2) -> tdBN. Requires even H, W.
struct Downsample {
  SpikeNeuron lif;
  Conv2dLayer conv;
  TdBnLayer bn;

  Downsample() = default;
  Downsample(ParamRegistry& r, const std::string& name, int c,
             const NeuronConfig& cfg);

  Tensor forward(const Tensor& x, bool training);
  void for_each_conv(const ConvVisitor& v) const { v(conv.name, conv, &lif); }
  void for_each_neuron(const NeuronVisitor& v) { v(lif); }
};

// NI-LIF -> nearest x2 -> 3x3 conv (channels /2) -> tdBN.
struct UpsampleBlock {
  SpikeNeuron lif;
  Conv2dLayer conv;
  TdBnLayer bn;

  UpsampleBlock() = default;
  UpsampleBlock(ParamRegistry& r, const std::string& name, int c,
                const NeuronConfig& cfg);

  Tensor forward(const Tensor& x, bool training);
  void for_each_conv(const ConvVisitor& v) const { v(conv.name, conv, &lif); }
  void for_each_neuron(const NeuronVisitor& v) { v(lif); }
};

// Writes one 8-bit grayscale PGM per timestep under {outdir}/{block}/, named
// {branch}_t{t}.pgm. Channels of batch item 0 are tiled into a near-square
// grid; values are scaled from [0,1] to 0..255.
void dump_spike_maps(const std::vector<float>& spikes, const Shape& shape,
                     const std::string& outdir, const std::string& block,
                     const std::string& branch);

}  // namespace uiesnn

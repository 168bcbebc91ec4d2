#pragma once

#include <array>
#include <stdexcept>
#include <cstdint>
#include <string>
#include <vector>

#include "uiesnn/blocks.hpp"
#include "uiesnn/tensor.hpp"

namespace uiesnn {

// Well-formed container that does not fit the declared configuration.
struct IncompatibleCheckpointError : std::runtime_error {
  explicit IncompatibleCheckpointError(const std::string& m) : std::runtime_error(m) {}
};

struct NetConfig {
  int timesteps = 4;
  int d_levels = 4;
  int base_channels = 16;
  // SRB counts: encoder levels 1-3, then decoder levels 3-1.
  std::array<int, 6> stage_layout{4, 4, 8, 2, 2, 2};
  NeuronConfig neuron;  // d_levels above overrides neuron.d_levels
  bool use_fdm = true, use_mda = true, use_mplb = true;

  void validate() const;
};

// The three scale predictions, each with its resized global input residual
// already added. Rank-5 tensors with T=1.
struct MultiScaleOutput {
  Tensor full, half, quarter;
};

class Model {
 public:
  explicit Model(NetConfig cfg);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // img: rank-5 (1, B, 3, H, W) in [0,1]. Training requires H, W divisible
  // by 4; eval reflect-pads to the next multiple of 4 and crops back.
  MultiScaleOutput forward(const Tensor& img, bool training);

  const NetConfig& config() const { return cfg_; }
  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }
  std::int64_t param_count() const;

  std::int64_t step = 0;

  void save_checkpoint(const std::string& path) const;
  static Model load_checkpoint(const std::string& path);

  void for_each_conv(const ConvVisitor& v) const;
  void for_each_neuron(const NeuronVisitor& v);
  void set_record_stats(bool on);

 private:
  NetConfig cfg_;
  ParamRegistry reg_;

  PatchEmbed embed_;
  std::vector<SrbBlock> enc1_, enc2_, enc3_, dec3_, dec2_, dec1_;
  Downsample down1_, down2_;
  UpsampleBlock up2_, up1_;
  Conv2dLayer inject2_conv_, inject2_proj_, inject3_conv_, inject3_proj_;
  TdBnLayer inject2_bn_, inject3_bn_;
  Conv2dLayer skip2_conv_, skip1_conv_;
  TdBnLayer skip2_bn_, skip1_bn_;
  Conv2dLayer head1_, head2_, head3_;
};

}  // namespace uiesnn

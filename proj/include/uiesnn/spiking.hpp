#pragma once

#include <string>
#include <vector>

#include "uiesnn/tensor.hpp"

namespace uiesnn {

struct NeuronConfig {
  float gamma = 0.5f;           // membrane decay, (0, 1]
  float v_th = 1.0f;            // firing threshold, > 0
  int d_levels = 4;             // quantisation steps D, >= 1
  float surrogate_alpha = 4.0f; // sigmoid surrogate sharpness

  void validate() const;
};

// alpha * sigmoid(alpha*x) * (1 - sigmoid(alpha*x)), the derivative assigned
// to the binary spike indicator during backward.
float surrogate_grad(float membrane_minus_threshold, float alpha);

// When enabled (test hook), SpikeNeuron::forward replays its cached hard run
// as a locally linear function: membrane recurrences use the recorded resets
// as constants and each spike output is the recorded spike plus the surrogate
// derivative times the membrane deviation. Finite differences of this frozen
// forward equal the analytic surrogate backward of the hard forward.
void set_frozen_spike_mode(bool on);
bool frozen_spike_mode();

// Multi-level NI-LIF neuron (binary indicator LIF when binary=true, which
// forces the D=1 alphabet and the sigmoid surrogate).
//
// Per step: mu_t = gamma * (mu_{t-1} - m_{t-1} * v_th) + u_t,
//           m_t  = clamp(floor(mu_t / v_th), 0, D),  output s_t = m_t / D.
// The reset subtracts the un-normalised fired magnitude m * v_th; the reset
// path is detached in backward.
class SpikeNeuron {
 public:
  SpikeNeuron() = default;
  SpikeNeuron(std::string name, NeuronConfig cfg, bool binary = false);

  Tensor forward(const Tensor& u_seq);

  const std::string& name() const { return name_; }
  const NeuronConfig& config() const { return cfg_; }
  bool binary() const { return binary_; }

  // Firing-rate instrumentation (fraction of nonzero outputs of the last
  // forward; valid when record_stats was set).
  void set_record_stats(bool on) { record_stats_ = on; }
  double last_firing_rate() const { return last_fr_; }
  bool has_stats() const { return has_stats_; }

  // Spike-map access: last output retained when record_stats is on.
  const std::vector<float>& last_spikes() const { return cache_spikes_; }
  const Shape& last_shape() const { return cache_shape_; }
  bool has_cache() const { return has_cache_; }

 private:
  std::string name_ = "lif";
  NeuronConfig cfg_;
  bool binary_ = false;
  bool record_stats_ = false;
  double last_fr_ = 0.0;
  bool has_stats_ = false;

  // cache of the last hard forward, consumed by frozen mode and spike maps
  Shape cache_shape_;
  std::vector<float> cache_mu_, cache_spikes_, cache_resets_;
  bool has_cache_ = false;

  Tensor forward_hard(const Tensor& u_seq);
  Tensor forward_frozen(const Tensor& u_seq);
  float spike_derivative(float mu) const;
};

// Stand-alone functional forms used by tests and the spec's operation surface.
Tensor nilif_forward(const Tensor& u_seq, const NeuronConfig& cfg);
Tensor binary_lif_forward(const Tensor& u_seq, const NeuronConfig& cfg);

// Threshold-dependent batch normalisation. Training mode normalises each
// channel over the merged T*B*H*W population to variance (alpha_bn*v_th)^2
// before scale/shift and updates running statistics in place.
struct TdBnParams {
  Tensor scale;        // rank 1, C, learned
  Tensor shift;        // rank 1, C, learned
  Tensor running_mean; // rank 1, C, buffer
  Tensor running_var;  // rank 1, C, buffer
  float v_th_link = 1.0f;
  float alpha_bn = 1.0f;
  float momentum = 0.1f;
};

Tensor tdbn(const Tensor& x, TdBnParams& params, bool training);

}  // namespace uiesnn

#pragma once

#include <unordered_map>
#include <vector>

#include "uiesnn/blocks.hpp"

namespace uiesnn {

struct AdamConfig {
  float lr = 2e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
};

// Adaptive-moment optimizer over a ParamRegistry's parameters. First/second
// moment state is keyed by parameter name and lazily initialised to zero.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update from the accumulated gradients, then clears them.
  // `lr_override` < 0 means use the configured rate.
  void step(ParamRegistry& reg, float lr_override = -1.0f);

  const AdamConfig& config() const { return cfg_; }
  long long steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<float> m, v;
  };
  AdamConfig cfg_;
  std::unordered_map<std::string, Moments> state_;
  long long t_ = 0;
};

}  // namespace uiesnn

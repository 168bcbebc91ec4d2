#include "uiesnn/optim.hpp"

#include <cmath>

namespace uiesnn {

void Adam::step(ParamRegistry& reg, float lr_override) {
  const float lr = lr_override < 0.0f ? cfg_.lr : lr_override;
  ++t_;
  const double bc1 = 1.0 - std::pow(double(cfg_.beta1), double(t_));
  const double bc2 = 1.0 - std::pow(double(cfg_.beta2), double(t_));

  for (auto& [name, param] : reg.params) {
    Tensor p = param;
    if (!p.requires_grad()) continue;
    Moments& mom = state_[name];
    const std::size_t n = p.values().size();
    if (mom.m.size() != n) {
      mom.m.assign(n, 0.0f);
      mom.v.assign(n, 0.0f);
    }
    float* w = p.values().data();
    const float* g = p.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const float grad = g[i] + cfg_.weight_decay * w[i];
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0f - cfg_.beta1) * grad;
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0f - cfg_.beta2) * grad * grad;
      const double mhat = double(mom.m[i]) / bc1;
      const double vhat = double(mom.v[i]) / bc2;
      w[i] -= float(double(lr) * mhat / (std::sqrt(vhat) + double(cfg_.eps)));
    }
    p.zero_grad();
  }
}

}  // namespace uiesnn

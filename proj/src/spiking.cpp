#include "uiesnn/spiking.hpp"

#include <cmath>

#include "uiesnn/kernels.hpp"
#include "uiesnn/ops.hpp"

namespace uiesnn {

namespace {
bool g_frozen_spikes = false;
constexpr float kBnEps = 1e-5f;
}  // namespace

void set_frozen_spike_mode(bool on) { g_frozen_spikes = on; }
bool frozen_spike_mode() { return g_frozen_spikes; }

void NeuronConfig::validate() const {
  if (!(gamma > 0.0f && gamma <= 1.0f)) throw ParameterError("NeuronConfig: gamma must be in (0,1]");
  if (!(v_th > 0.0f)) throw ParameterError("NeuronConfig: v_th must be positive");
  if (d_levels < 1) throw ParameterError("NeuronConfig: d_levels must be >= 1");
  if (!(surrogate_alpha > 0.0f)) throw ParameterError("NeuronConfig: surrogate_alpha must be positive");
}

float surrogate_grad(float x, float alpha) {
  const float s = 1.0f / (1.0f + std::exp(-alpha * x));
  return alpha * s * (1.0f - s);
}

SpikeNeuron::SpikeNeuron(std::string name, NeuronConfig cfg, bool binary)
    : name_(std::move(name)), cfg_(cfg), binary_(binary) {
  if (binary_) cfg_.d_levels = 1;
  cfg_.validate();
}

namespace {
float spike_deriv(float mu, const NeuronConfig& cfg, bool binary) {
  if (binary) return surrogate_grad(mu - cfg.v_th, cfg.surrogate_alpha);
  // Straight-through inside the active clamp range, 0 outside; the emitted
  // signal is m/D, so the slope is 1/(D*v_th).
  const float hi = float(cfg.d_levels) * cfg.v_th;
  return (mu >= 0.0f && mu <= hi) ? 1.0f / (float(cfg.d_levels) * cfg.v_th) : 0.0f;
}
}  // namespace

float SpikeNeuron::spike_derivative(float mu) const { return spike_deriv(mu, cfg_, binary_); }

Tensor SpikeNeuron::forward(const Tensor& u_seq) {
  if (u_seq.shape().rank() != 5)
    throw ShapeError("SpikeNeuron " + name_ + ": rank-5 input expected");
  if (g_frozen_spikes) return forward_frozen(u_seq);
  return forward_hard(u_seq);
}

Tensor SpikeNeuron::forward_hard(const Tensor& u_seq) {
  for (float v : u_seq.values())
    if (!std::isfinite(v)) throw NumericError("non-finite input current in neuron '" + name_ + "'");

  const Shape& s = u_seq.shape();
  const int t_steps = s.t();
  const std::size_t block = std::size_t(s.b()) * s.c() * s.h() * s.w();
  const std::size_t n = std::size_t(u_seq.numel());

  const bool rec = recording(u_seq);
  Tensor out(s, rec);

  cache_shape_ = s;
  cache_mu_.assign(n, 0.0f);
  cache_spikes_.assign(n, 0.0f);
  cache_resets_.assign(n, 0.0f);

  kernels::LifStepArgs args{cfg_.gamma, cfg_.v_th, 1.0f / cfg_.v_th,
                            float(cfg_.d_levels), 1.0f / float(cfg_.d_levels)};
  std::vector<float> zeros(block, 0.0f);
  std::vector<float> reset(block, 0.0f);
  for (int t = 0; t < t_steps; ++t) {
    const float* mu_prev = t == 0 ? zeros.data() : cache_mu_.data() + std::size_t(t - 1) * block;
    kernels::ops().lif_step(u_seq.data() + std::size_t(t) * block, mu_prev,
                            cache_mu_.data() + std::size_t(t) * block,
                            cache_spikes_.data() + std::size_t(t) * block, reset.data(),
                            block, args);
    std::copy(reset.begin(), reset.end(), cache_resets_.begin() + std::ptrdiff_t(std::size_t(t) * block));
  }
  std::copy(cache_spikes_.begin(), cache_spikes_.end(), out.data());
  has_cache_ = true;

  if (record_stats_) {
    last_fr_ = double(kernels::ops().count_nonzero(cache_spikes_.data(), n)) / double(n);
    has_stats_ = true;
  }

  if (rec) {
    auto un = u_seq.node();
    auto on = out.node();
    auto mu = cache_mu_;  // snapshot; the layer may run again before backward
    const NeuronConfig cfg = cfg_;
    const bool bin = binary_;
    Tape::active()->record([=]() {
      if (!un->requires_grad) return;
      un->ensure_grad();
      std::vector<float> gmu(block, 0.0f);
      for (int t = t_steps - 1; t >= 0; --t) {
        const float* go = on->g.data() + std::size_t(t) * block;
        const float* mut = mu.data() + std::size_t(t) * block;
        float* gu = un->g.data() + std::size_t(t) * block;
        for (std::size_t i = 0; i < block; ++i) {
          // reset path detached: d mu_t / d mu_{t-1} = gamma
          const float g = go[i] * spike_deriv(mut[i], cfg, bin) + cfg.gamma * gmu[i];
          gmu[i] = g;
          gu[i] += g;
        }
      }
    });
  }
  return out;
}

Tensor SpikeNeuron::forward_frozen(const Tensor& u_seq) {
  if (!has_cache_ || !(cache_shape_ == u_seq.shape()))
    throw UsageError("frozen spike mode requires a prior hard forward of matching shape in neuron '" +
                     name_ + "'");
  const Shape& s = u_seq.shape();
  const int t_steps = s.t();
  const std::size_t block = std::size_t(s.b()) * s.c() * s.h() * s.w();

  const bool rec = recording(u_seq);
  Tensor out(s, rec);
  std::vector<float> mu(std::size_t(u_seq.numel()), 0.0f);
  for (int t = 0; t < t_steps; ++t) {
    const float* mu_prev = t == 0 ? nullptr : mu.data() + std::size_t(t - 1) * block;
    const float* rst_prev = t == 0 ? nullptr : cache_resets_.data() + std::size_t(t - 1) * block;
    const float* u = u_seq.data() + std::size_t(t) * block;
    float* mut = mu.data() + std::size_t(t) * block;
    float* o = out.data() + std::size_t(t) * block;
    const float* mu_c = cache_mu_.data() + std::size_t(t) * block;
    const float* s_c = cache_spikes_.data() + std::size_t(t) * block;
    for (std::size_t i = 0; i < block; ++i) {
      const float prev = t == 0 ? 0.0f : cfg_.gamma * (mu_prev[i] - rst_prev[i]);
      mut[i] = prev + u[i];
      o[i] = s_c[i] + spike_derivative(mu_c[i]) * (mut[i] - mu_c[i]);
    }
  }

  if (rec) {
    auto un = u_seq.node();
    auto on = out.node();
    auto mu_c = cache_mu_;
    const NeuronConfig cfg = cfg_;
    const bool bin = binary_;
    Tape::active()->record([=]() {
      if (!un->requires_grad) return;
      un->ensure_grad();
      std::vector<float> gmu(block, 0.0f);
      for (int t = t_steps - 1; t >= 0; --t) {
        const float* go = on->g.data() + std::size_t(t) * block;
        const float* mut = mu_c.data() + std::size_t(t) * block;
        float* gu = un->g.data() + std::size_t(t) * block;
        for (std::size_t i = 0; i < block; ++i) {
          const float g = go[i] * spike_deriv(mut[i], cfg, bin) + cfg.gamma * gmu[i];
          gmu[i] = g;
          gu[i] += g;
        }
      }
    });
  }
  return out;
}

Tensor nilif_forward(const Tensor& u_seq, const NeuronConfig& cfg) {
  SpikeNeuron n("nilif", cfg, false);
  return n.forward(u_seq);
}

Tensor binary_lif_forward(const Tensor& u_seq, const NeuronConfig& cfg) {
  SpikeNeuron n("lif", cfg, true);
  return n.forward(u_seq);
}

Tensor tdbn(const Tensor& x, TdBnParams& params, bool training) {
  if (x.shape().rank() != 5) throw ShapeError("tdbn: rank-5 input expected");
  const Shape& xs = x.shape();
  const int c = xs.c();
  if (params.scale.shape().rank() != 1 || params.scale.shape().d[0] != c)
    throw ShapeError("tdbn: channel count mismatch");
  const std::size_t hw = std::size_t(xs.h()) * xs.w();
  const int slices = xs.t() * xs.b();
  const std::size_t pop = std::size_t(slices) * hw;
  const float k_target = params.alpha_bn * params.v_th_link;

  // per-channel stats used for this pass
  std::vector<float> mean(std::size_t(c), 0.0f), var(std::size_t(c), 0.0f);
  if (training) {
    for (int ch = 0; ch < c; ++ch) {
      double sum = 0.0, sq = 0.0;
      for (int s = 0; s < slices; ++s) {
        const float* p = x.data() + (std::size_t(s) * c + ch) * hw;
        sum += kernels::ops().sum(p, hw);
        sq += kernels::ops().dot(p, p, hw);
      }
      const double m = sum / double(pop);
      mean[std::size_t(ch)] = float(m);
      var[std::size_t(ch)] = float(std::max(0.0, sq / double(pop) - m * m));
    }
    for (int ch = 0; ch < c; ++ch) {
      params.running_mean.data()[ch] =
          (1.0f - params.momentum) * params.running_mean.data()[ch] + params.momentum * mean[std::size_t(ch)];
      params.running_var.data()[ch] =
          (1.0f - params.momentum) * params.running_var.data()[ch] + params.momentum * var[std::size_t(ch)];
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[std::size_t(ch)] = params.running_mean.data()[ch];
      var[std::size_t(ch)] = params.running_var.data()[ch];
    }
  }

  const bool rec = Tape::active() &&
                   (x.requires_grad() || params.scale.requires_grad() || params.shift.requires_grad());
  Tensor out(xs, rec);
  for (int ch = 0; ch < c; ++ch) {
    const float inv_std = k_target / std::sqrt(var[std::size_t(ch)] + kBnEps);
    const float a = params.scale.data()[ch] * inv_std;
    const float b = params.shift.data()[ch] - a * mean[std::size_t(ch)];
    for (int s = 0; s < slices; ++s) {
      const float* p = x.data() + (std::size_t(s) * c + ch) * hw;
      float* o = out.data() + (std::size_t(s) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) o[i] = a * p[i] + b;
    }
  }

  if (rec) {
    auto xn = x.node();
    auto scn = params.scale.node();
    auto shn = params.shift.node();
    auto on = out.node();
    auto mn = mean;
    auto vn = var;
    const bool train_stats = training;
    Tape::active()->record([=]() {
      for (int ch = 0; ch < c; ++ch) {
        const float sigma = std::sqrt(vn[std::size_t(ch)] + kBnEps);
        const float m = mn[std::size_t(ch)];
        double gsum = 0.0, gxhat = 0.0;
        for (int s = 0; s < slices; ++s) {
          const float* g = on->g.data() + (std::size_t(s) * c + ch) * hw;
          const float* xv = xn->v.data() + (std::size_t(s) * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            gsum += g[i];
            gxhat += double(g[i]) * double((xv[i] - m) / sigma);
          }
        }
        if (shn->requires_grad) {
          shn->ensure_grad();
          shn->g[std::size_t(ch)] += float(gsum);
        }
        if (scn->requires_grad) {
          scn->ensure_grad();
          scn->g[std::size_t(ch)] += float(k_target * gxhat);
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          const float a = scn->v[std::size_t(ch)] * k_target / sigma;
          if (train_stats) {
            const float mg = float(gsum / double(pop));
            const float mgx = float(gxhat / double(pop));
            for (int s = 0; s < slices; ++s) {
              const float* g = on->g.data() + (std::size_t(s) * c + ch) * hw;
              const float* xv = xn->v.data() + (std::size_t(s) * c + ch) * hw;
              float* gx = xn->g.data() + (std::size_t(s) * c + ch) * hw;
              for (std::size_t i = 0; i < hw; ++i) {
                const float xhat = (xv[i] - m) / sigma;
                gx[i] += a * (g[i] - mg - xhat * mgx);
              }
            }
          } else {
            for (int s = 0; s < slices; ++s) {
              const float* g = on->g.data() + (std::size_t(s) * c + ch) * hw;
              float* gx = xn->g.data() + (std::size_t(s) * c + ch) * hw;
              for (std::size_t i = 0; i < hw; ++i) gx[i] += a * g[i];
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace uiesnn

#include <cmath>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "uiesnn/ops.hpp"
#include "uiesnn/spiking.hpp"

using namespace uiesnn;
namespace op = uiesnn::ops;

namespace {

// Scalar per-pixel reference simulator, independent of the vectorised path.
// Float arithmetic in the same mul-then-add order so equality is bitwise.
std::vector<float> reference_lif(const Tensor& u, const NeuronConfig& cfg) {
  const Shape& s = u.shape();
  const std::size_t block = std::size_t(s.b()) * s.c() * s.h() * s.w();
  std::vector<float> out(std::size_t(u.numel()));
  for (std::size_t i = 0; i < block; ++i) {
    float mu = 0.0f, reset = 0.0f;
    for (int t = 0; t < s.t(); ++t) {
      mu = cfg.gamma * (mu - reset) + u.data()[std::size_t(t) * block + i];
      float m = std::floor(mu / cfg.v_th);
      if (m < 0.0f) m = 0.0f;
      if (m > float(cfg.d_levels)) m = float(cfg.d_levels);
      out[std::size_t(t) * block + i] = m / float(cfg.d_levels);
      reset = m * cfg.v_th;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("hand-simulated NI-LIF trace: gamma=0.5 vth=1 D=1 input 0.6") {
  NeuronConfig cfg;
  cfg.gamma = 0.5f;
  cfg.v_th = 1.0f;
  cfg.d_levels = 1;
  Tensor u(Shape::t5(3, 1, 1, 1, 1));
  u.values() = {0.6f, 0.6f, 0.6f};
  Tensor s = nilif_forward(u, cfg);
  CHECK(s.values()[0] == 0.0f);
  CHECK(s.values()[1] == 0.0f);
  CHECK(s.values()[2] == 1.0f);
}

TEST_CASE("quantiser hand cases: gamma=1 vth=1 D=4 single step") {
  NeuronConfig cfg;
  cfg.gamma = 1.0f;
  cfg.v_th = 1.0f;
  cfg.d_levels = 4;
  auto run = [&](float v) {
    Tensor u(Shape::t5(1, 1, 1, 1, 1));
    u.values() = {v};
    return nilif_forward(u, cfg).item();
  };
  CHECK(run(2.3f) == doctest::Approx(0.5f));  // m=2 -> 2/4
  CHECK(run(-0.4f) == 0.0f);
  CHECK(run(7.0f) == 1.0f);  // clamped to D
}

TEST_CASE("zero input gives zero spikes") {
  NeuronConfig cfg;
  Tensor u(Shape::t5(4, 1, 2, 3, 3));
  Tensor s = nilif_forward(u, cfg);
  for (float v : s.values()) CHECK(v == 0.0f);
}

TEST_CASE("binary LIF hand trace and definitional equivalence with D=1") {
  NeuronConfig cfg;
  cfg.gamma = 0.5f;
  cfg.v_th = 1.0f;
  Tensor u(Shape::t5(3, 1, 1, 1, 1));
  u.values() = {1.2f, 0.1f, 0.1f};
  Tensor s = binary_lif_forward(u, cfg);
  CHECK(s.values()[0] == 1.0f);
  CHECK(s.values()[1] == 0.0f);
  CHECK(s.values()[2] == 0.0f);

  std::mt19937 rng(17);
  Tensor r(Shape::t5(4, 1, 2, 4, 4));
  testutil::fill_uniform(r, rng, -1.0f, 3.0f);
  NeuronConfig d1 = cfg;
  d1.d_levels = 1;
  CHECK(binary_lif_forward(r, cfg).values() == nilif_forward(r, d1).values());
}

TEST_CASE("input >= v_th at every step spikes everywhere") {
  NeuronConfig cfg;
  cfg.gamma = 0.73f;
  cfg.v_th = 1.0f;
  Tensor u(Shape::t5(5, 1, 1, 2, 2));
  for (auto& v : u.values()) v = 1.4f;
  Tensor s = binary_lif_forward(u, cfg);
  for (float v : s.values()) CHECK(v == 1.0f);
}

TEST_CASE("vectorised NI-LIF equals the scalar reference bitwise") {
  std::mt19937 rng(23);
  NeuronConfig cfg;
  cfg.gamma = 0.5f;
  cfg.v_th = 1.0f;
  cfg.d_levels = 4;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor u(Shape::t5(2, 1, 2, 4, 4));
    testutil::fill_uniform(u, rng, -2.0f, 6.0f);
    Tensor s = nilif_forward(u, cfg);
    CHECK(s.values() == reference_lif(u, cfg));
  }
}

TEST_CASE("output alphabet is exactly {0, 1/D, ..., 1}") {
  std::mt19937 rng(29);
  NeuronConfig cfg;
  cfg.d_levels = 4;
  Tensor u(Shape::t5(4, 1, 3, 5, 5));
  testutil::fill_uniform(u, rng, -3.0f, 8.0f);
  Tensor s = nilif_forward(u, cfg);
  for (float v : s.values()) {
    const float scaled = v * float(cfg.d_levels);
    CHECK(scaled == std::floor(scaled));
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("single-step monotonicity in the input current") {
  NeuronConfig cfg;
  cfg.d_levels = 4;
  float prev = -1.0f;
  for (float v = -1.0f; v < 6.0f; v += 0.01f) {
    Tensor u(Shape::t5(1, 1, 1, 1, 1));
    u.values() = {v};
    float s = nilif_forward(u, cfg).item();
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("firing-rate bounds: zero input -> 0, saturating input -> 1") {
  NeuronConfig cfg;
  cfg.d_levels = 4;
  cfg.v_th = 1.0f;
  SpikeNeuron n("probe", cfg);
  n.set_record_stats(true);

  Tensor z(Shape::t5(3, 1, 2, 4, 4));
  n.forward(z);
  CHECK(n.last_firing_rate() == 0.0);

  Tensor sat(Shape::t5(3, 1, 2, 4, 4));
  for (auto& v : sat.values()) v = float(cfg.d_levels) * cfg.v_th + 1.0f;
  n.forward(sat);
  CHECK(n.last_firing_rate() == 1.0);
}

TEST_CASE("non-finite input raises a numeric error naming the layer") {
  NeuronConfig cfg;
  SpikeNeuron n("enc1.lif", cfg);
  Tensor u(Shape::t5(1, 1, 1, 1, 2));
  u.values() = {0.1f, std::numeric_limits<float>::quiet_NaN()};
  CHECK_THROWS_WITH_AS(n.forward(u), doctest::Contains("enc1.lif"), NumericError);
}

TEST_CASE("surrogate gradient values") {
  CHECK(surrogate_grad(0.0f, 4.0f) == doctest::Approx(1.0f));  // 4 * 0.25
  CHECK(surrogate_grad(50.0f, 4.0f) == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(surrogate_grad(-50.0f, 4.0f) == doctest::Approx(0.0f).epsilon(1e-6));
  for (float x : {0.3f, 1.7f, 4.0f})
    CHECK(surrogate_grad(x, 4.0f) == doctest::Approx(surrogate_grad(-x, 4.0f)));
}

TEST_CASE("NI-LIF backward matches finite differences of the frozen forward") {
  std::mt19937 rng(37);
  NeuronConfig cfg;
  cfg.gamma = 0.5f;
  cfg.d_levels = 4;
  SpikeNeuron neuron("fd.lif", cfg);
  Tensor u(Shape::t5(3, 1, 2, 3, 3), true);
  testutil::fill_uniform(u, rng, -1.0f, 5.0f);

  Tensor proj(u.shape());
  testutil::fill_uniform(proj, rng, 0.1f, 1.0f);

  neuron.forward(u);  // record the base spike pattern
  set_frozen_spike_mode(true);
  auto loss_value = [&]() {
    return double(op::sum_all(op::mul(neuron.forward(u), proj)).item());
  };
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = op::sum_all(op::mul(neuron.forward(u), proj));
    tape.backward(loss);
  }
  auto fd = testutil::finite_diff(u, loss_value, 1e-3f);
  set_frozen_spike_mode(false);
  CHECK(testutil::max_grad_err(u.grad(), fd) < 1e-3);
}

namespace {
TdBnParams make_tdbn(int c, float alpha_bn = 1.0f, float v_th = 1.0f) {
  TdBnParams p;
  p.scale = Tensor(Shape{c}, true);
  p.shift = Tensor(Shape{c}, true);
  p.running_mean = Tensor(Shape{c});
  p.running_var = Tensor(Shape{c});
  for (auto& v : p.scale.values()) v = 1.0f;
  for (auto& v : p.running_var.values()) v = 1.0f;
  p.alpha_bn = alpha_bn;
  p.v_th_link = v_th;
  return p;
}
}  // namespace

TEST_CASE("tdBN: constant channel collapses to the shift") {
  auto p = make_tdbn(2);
  p.shift.values() = {0.25f, -0.5f};
  Tensor x(Shape::t5(2, 1, 2, 4, 4));
  for (auto& v : x.values()) v = 3.0f;
  Tensor y = tdbn(x, p, true);
  const Shape& s = y.shape();
  for (int t = 0; t < s.t(); ++t)
    for (int c = 0; c < 2; ++c)
      for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w)
          CHECK(y.at(t, 0, c, h, w) == doctest::Approx(p.shift.values()[std::size_t(c)]));
}

TEST_CASE("tdBN: balanced two-value channel is preserved at unit target variance") {
  auto p = make_tdbn(1);
  Tensor x(Shape::t5(1, 1, 1, 2, 2));
  x.values() = {-1.0f, 1.0f, -1.0f, 1.0f};
  Tensor y = tdbn(x, p, true);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-3));
}

TEST_CASE("tdBN eval mode is the expected affine map") {
  auto p = make_tdbn(1);
  p.running_mean.values() = {0.3f};
  p.running_var.values() = {2.0f};
  p.scale.values() = {1.5f};
  p.shift.values() = {-0.2f};
  Tensor x(Shape::t5(1, 1, 1, 1, 3));
  x.values() = {0.0f, 1.0f, -2.0f};
  Tensor y = tdbn(x, p, false);
  for (int i = 0; i < 3; ++i) {
    const double expect = (x.values()[std::size_t(i)] - 0.3) / std::sqrt(2.0 + 1e-5) * 1.5 - 0.2;
    CHECK(y.values()[std::size_t(i)] == doctest::Approx(float(expect)).epsilon(1e-5));
  }
}

TEST_CASE("tdBN training statistics hit the (alpha_bn*v_th)^2 target") {
  std::mt19937 rng(43);
  const float target = 1.5f;  // alpha_bn * v_th
  auto p = make_tdbn(3, target, 1.0f);
  Tensor x(Shape::t5(4, 2, 3, 16, 16));  // population 4*2*16*16 = 2048 per channel
  testutil::fill_uniform(x, rng, -2.0f, 5.0f);
  Tensor y = tdbn(x, p, true);
  const Shape& s = y.shape();
  const int pop = s.t() * s.b() * s.h() * s.w();
  for (int c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (int t = 0; t < s.t(); ++t)
      for (int b = 0; b < s.b(); ++b)
        for (int h = 0; h < s.h(); ++h)
          for (int w = 0; w < s.w(); ++w) {
            const double v = y.at(t, b, c, h, w);
            sum += v;
            sq += v * v;
          }
    const double mean = sum / pop;
    const double var = sq / pop - mean * mean;
    CHECK(std::fabs(mean) < 1e-4);
    CHECK(var == doctest::Approx(double(target) * target).epsilon(0.01));
  }
}

TEST_CASE("tdBN gradient matches finite differences (training mode)") {
  std::mt19937 rng(47);
  auto p = make_tdbn(2);
  Tensor x(Shape::t5(2, 1, 2, 3, 3), true);
  testutil::fill_uniform(x, rng);
  Tensor proj(x.shape());
  testutil::fill_uniform(proj, rng, 0.1f, 1.0f);

  auto loss_value = [&]() {
    auto pc = p;  // running stats are updated in place; copy per evaluation
    return double(op::sum_all(op::mul(tdbn(x, pc, true), proj)).item());
  };
  Tape tape;
  {
    Tape::Scope scope(tape);
    auto pc = p;
    Tensor loss = op::sum_all(op::mul(tdbn(x, pc, true), proj));
    tape.backward(loss);
  }
  auto fd_x = testutil::finite_diff(x, loss_value, 1e-3f);
  CHECK(testutil::max_grad_err(x.grad(), fd_x) < 1e-3);
  auto fd_s = testutil::finite_diff(p.scale, loss_value, 1e-3f);
  CHECK(testutil::max_grad_err(p.scale.grad(), fd_s) < 1e-3);
  auto fd_b = testutil::finite_diff(p.shift, loss_value, 1e-3f);
  CHECK(testutil::max_grad_err(p.shift.grad(), fd_b) < 1e-3);
}

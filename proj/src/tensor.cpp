#include "uiesnn/tensor.hpp"

#include <atomic>
#include <sstream>

namespace uiesnn {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "x" : "") << d[i];
  os << ")";
  return os.str();
}

namespace {
std::atomic<std::int64_t> g_next_id{1};
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tensor::Tensor(Shape s, bool requires_grad) {
  node_ = std::make_shared<TensorData>();
  node_->shape = std::move(s);
  node_->v.assign(std::size_t(node_->shape.numel()), 0.0f);
  node_->requires_grad = requires_grad;
  // Backward closures read their output's grad unconditionally; keep it
  // allocated (zeros) for any tensor that can appear on a tape.
  if (requires_grad) node_->ensure_grad();
  node_->id = g_next_id.fetch_add(1);
}

Tensor Tensor::scalar(float value) {
  Tensor t{Shape{1}};
  t.node_->v[0] = value;
  return t;
}

Tensor Tensor::from(Shape s, std::vector<float> values, bool requires_grad) {
  if (std::int64_t(values.size()) != s.numel())
    throw ShapeError("data length " + std::to_string(values.size()) +
                     " does not match shape " + s.str());
  Tensor t{std::move(s), requires_grad};
  t.node_->v = std::move(values);
  return t;
}

float& Tensor::at(int t, int b, int c, int h, int w) {
  const Shape& s = shape();
  return node_->v[std::size_t((((std::int64_t(t) * s.b() + b) * s.c() + c) * s.h() + h) * s.w() + w)];
}

float Tensor::at(int t, int b, int c, int h, int w) const {
  return const_cast<Tensor*>(this)->at(t, b, c, h, w);
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

void Tape::backward(Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw UsageError("backward expects a defined scalar loss");
  if (!loss.requires_grad())
    throw UsageError("backward on a detached tensor (nothing was recorded)");
  loss.grad()[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

}  // namespace uiesnn

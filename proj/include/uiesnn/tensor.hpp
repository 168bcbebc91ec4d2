#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace uiesnn {

// Errors thrown by the tensor core and everything built on it.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Malformed serialized container or image (bad magic/version, truncation).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major shape, W fastest. Rank 5 tensors are T x B x C x H x W;
// conv kernels are rank 4 (Cout x Cin x k x k), per-channel vectors rank 1.
struct Shape {
  std::vector<int> d;

  Shape() = default;
  Shape(std::initializer_list<int> dims) : d(dims) { validate(); }
  explicit Shape(std::vector<int> dims) : d(std::move(dims)) { validate(); }
  static Shape t5(int t, int b, int c, int h, int w) { return Shape{t, b, c, h, w}; }

  int rank() const { return int(d.size()); }
  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int v : d) n *= v;
    return n;
  }
  // Rank-5 accessors.
  int t() const { return dim5(0); }
  int b() const { return dim5(1); }
  int c() const { return dim5(2); }
  int h() const { return dim5(3); }
  int w() const { return dim5(4); }

  bool operator==(const Shape& o) const { return d == o.d; }
  bool operator!=(const Shape& o) const { return d != o.d; }
  std::string str() const;

 private:
  int dim5(int i) const {
    if (rank() != 5) throw ShapeError("rank-5 tensor expected, got " + str());
    return d[i];
  }
  void validate() const {
    for (int v : d)
      if (v < 1) throw ShapeError("all dims must be >= 1, got " + str());
  }
};

struct TensorData {
  Shape shape;
  std::vector<float> v;
  std::vector<float> g;  // allocated on first use
  bool requires_grad = false;
  std::int64_t id = 0;

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0f);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, bool requires_grad = false);
  static Tensor scalar(float value);
  static Tensor from(Shape s, std::vector<float> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return std::int64_t(node_->v.size()); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  std::int64_t id() const { return node_->id; }

  float* data() { return node_->v.data(); }
  const float* data() const { return node_->v.data(); }
  std::vector<float>& values() { return node_->v; }
  const std::vector<float>& values() const { return node_->v; }
  float* grad() {
    node_->ensure_grad();
    return node_->g.data();
  }
  const std::vector<float>& grad_values() const { return node_->g; }
  void zero_grad() { node_->g.assign(node_->v.size(), 0.0f); }

  float item() const {
    if (numel() != 1) throw UsageError("item() on non-scalar tensor " + shape().str());
    return node_->v[0];
  }
  // Rank-5 element access (tests and reference oracles).
  float& at(int t, int b, int c, int h, int w);
  float at(int t, int b, int c, int h, int w) const;

  std::shared_ptr<TensorData> node() const { return node_; }

 private:
  std::shared_ptr<TensorData> node_;
};

// Ordered record of executed primitives; backward replays it in reverse.
// Ops record onto the active tape (RAII scope) when an input requires grad.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    entries_.push_back(std::move(backward_fn));
  }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss)=1 and accumulates (+=) into every reachable grad.
  void backward(Tensor& loss);

  static Tape* active();

  struct Scope {
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

 private:
  std::vector<std::function<void()>> entries_;
};

// True when the active tape should record ops touching these inputs.
inline bool recording(const Tensor& a) {
  return Tape::active() != nullptr && a.requires_grad();
}
inline bool recording(const Tensor& a, const Tensor& b) {
  return Tape::active() != nullptr && (a.requires_grad() || b.requires_grad());
}

}  // namespace uiesnn

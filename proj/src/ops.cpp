#include "uiesnn/ops.hpp"

#include <cmath>
#include <cstring>

#include "uiesnn/fft.hpp"
#include "uiesnn/kernels.hpp"

namespace uiesnn::ops {

namespace {

using kernels::ops;

void require_rank5(const Tensor& x, const char* op) {
  if (x.shape().rank() != 5)
    throw ShapeError(std::string(op) + ": rank-5 tensor expected, got " + x.shape().str());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
}

std::size_t plane(const Shape& s) { return std::size_t(s.h()) * s.w(); }

}  // namespace

void check_finite(const Tensor& x, const std::string& where) {
  for (float v : x.values())
    if (!std::isfinite(v))
      throw NumericError("non-finite value in " + where);
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int pad) {
  require_rank5(x, "conv2d");
  if (kernel.shape().rank() != 4)
    throw ShapeError("conv2d: kernel must be rank 4, got " + kernel.shape().str());
  if (stride < 1 || pad < 0) throw ParameterError("conv2d: stride >= 1 and pad >= 0 required");
  const Shape& xs = x.shape();
  const int cout = kernel.shape().d[0], cin = kernel.shape().d[1];
  const int kh_ = kernel.shape().d[2], kw_ = kernel.shape().d[3];
  if (kh_ != kw_) throw ShapeError("conv2d: square kernels only");
  const int k = kh_;
  if (xs.c() != cin)
    throw ShapeError("conv2d: input channels " + std::to_string(xs.c()) +
                     " != kernel Cin " + std::to_string(cin));
  const int h = xs.h(), w = xs.w();
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  if (h + 2 * pad - k < 0 || oh < 1 || ow < 1)
    throw ShapeError("conv2d: non-positive output size for input " + xs.str());

  const bool rec = recording(x, kernel);
  Tensor out(Shape::t5(xs.t(), xs.b(), cout, oh, ow), rec);
  const int slices = xs.t() * xs.b();
  const std::size_t in_plane = plane(xs);
  const std::size_t out_plane = std::size_t(oh) * ow;
  const float* wv = kernel.data();
  const float* xv = x.data();
  float* ov = out.data();

  auto run = [=](const float* src, const float* ker, float* dst) {
    const kernels::Ops& K = ops();
    // Fused 3-tap interior range for stride 1, k == 3 (taps applied in
    // ascending column order, bitwise-equal to three sequential axpy passes).
    const int f0 = std::max(0, pad);
    const int f1 = std::min(ow - 1, w - 3 + pad);
    for (int s = 0; s < slices; ++s) {
      const float* xin = src + std::size_t(s) * cin * in_plane;
      float* o = dst + std::size_t(s) * cout * out_plane;
      for (int co = 0; co < cout; ++co) {
        float* oc = o + std::size_t(co) * out_plane;
        for (int ci = 0; ci < cin; ++ci) {
          const float* xc = xin + std::size_t(ci) * in_plane;
          const float* kr = ker + (std::size_t(co) * cin + ci) * k * k;
          if (stride == 1 && k == 3) {
            for (int orow = 0; orow < oh; ++orow) {
              const int ir0 = orow - pad;  // input row for tap r = 0
              float* orow_p = oc + std::size_t(orow) * ow;
              const bool all_rows = ir0 >= 0 && ir0 + 2 < h;
              if (all_rows && f0 <= f1) {
                const float* x0 = xc + std::size_t(ir0) * w + f0 - pad;
                K.conv3x3_acc(kr, x0, x0 + w, x0 + 2 * w, orow_p + f0,
                              std::size_t(f1 - f0 + 1));
              }
              for (int r = 0; r < 3; ++r) {
                const int irow = ir0 + r;
                if (irow < 0 || irow >= h) continue;
                const float* xrow = xc + std::size_t(irow) * w;
                const float* k3 = kr + r * 3;
                if (!all_rows && f0 <= f1)
                  K.axpy3(k3, xrow + f0 - pad, xrow + f0 + 1 - pad,
                          xrow + f0 + 2 - pad, orow_p + f0, std::size_t(f1 - f0 + 1));
                for (int c = 0; c < 3; ++c) {
                  const int o0 = std::max(0, pad - c);
                  const int o1 = std::min(ow - 1, w - 1 - c + pad);
                  for (int o_ = o0; o_ < f0 && o_ <= o1; ++o_)
                    orow_p[o_] += k3[c] * xrow[o_ + c - pad];
                  for (int o_ = std::max(f1 + 1, o0); o_ <= o1; ++o_)
                    orow_p[o_] += k3[c] * xrow[o_ + c - pad];
                }
              }
            }
            continue;
          }
          for (int r = 0; r < k; ++r) {
            for (int c = 0; c < k; ++c) {
              const float kval = kr[r * k + c];
              for (int orow = 0; orow < oh; ++orow) {
                const int irow = orow * stride + r - pad;
                if (irow < 0 || irow >= h) continue;
                const float* xrow = xc + std::size_t(irow) * w;
                float* orow_p = oc + std::size_t(orow) * ow;
                if (stride == 1) {
                  int o0 = std::max(0, pad - c);
                  int o1 = std::min(ow - 1, w - 1 - c + pad);
                  if (o0 > o1) continue;
                  K.axpy(kval, xrow + o0 + c - pad, orow_p + o0, std::size_t(o1 - o0 + 1));
                } else {
                  for (int oc_ = 0; oc_ < ow; ++oc_) {
                    const int icol = oc_ * stride + c - pad;
                    if (icol < 0 || icol >= w) continue;
                    orow_p[oc_] += kval * xrow[icol];
                  }
                }
              }
            }
          }
        }
      }
    }
  };
  run(xv, wv, ov);

  if (rec) {
    auto xn = x.node();
    auto kn = kernel.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      const kernels::Ops& K = ops();
      const float* g = on->g.data();
      // d/dx: transposed pass, g scattered back through the kernel.
      if (xn->requires_grad) {
        xn->ensure_grad();
        float* gx = xn->g.data();
        // Fused interior over input columns: gx[i] accumulates
        // k[0]*g[i+pad] + k[1]*g[i+pad-1] + k[2]*g[i+pad-2] in tap order.
        const int b0 = std::max(0, 2 - pad);
        const int b1 = std::min(w - 1, ow - 1 - pad);
        for (int s = 0; s < slices; ++s) {
          float* gxi = gx + std::size_t(s) * cin * in_plane;
          const float* go = g + std::size_t(s) * cout * out_plane;
          for (int co = 0; co < cout; ++co) {
            const float* gc = go + std::size_t(co) * out_plane;
            for (int ci = 0; ci < cin; ++ci) {
              float* gxc = gxi + std::size_t(ci) * in_plane;
              const float* kr = kn->v.data() + (std::size_t(co) * cin + ci) * k * k;
              if (stride == 1 && k == 3) {
                // Column-flipped taps: the fused kernel reads ascending
                // offsets, while the scatter needs g[i + pad - c].
                float k9f[9];
                for (int r = 0; r < 3; ++r)
                  for (int c = 0; c < 3; ++c) k9f[r * 3 + (2 - c)] = kr[r * 3 + c];
                for (int irow = 0; irow < h; ++irow) {
                  float* gxrow = gxc + std::size_t(irow) * w;
                  // tap r pulls from output row irow + pad - r
                  const int or0 = irow + pad;
                  const bool all_rows = or0 - 2 >= 0 && or0 < oh;
                  if (all_rows && b0 <= b1) {
                    const float* g0 = gc + std::size_t(or0) * ow + b0 + pad - 2;
                    K.conv3x3_acc(k9f, g0, g0 - ow, g0 - 2 * ow, gxrow + b0,
                                  std::size_t(b1 - b0 + 1));
                  }
                  for (int r = 0; r < 3; ++r) {
                    const int orow = or0 - r;
                    if (orow < 0 || orow >= oh) continue;
                    const float* grow = gc + std::size_t(orow) * ow;
                    const float* k3 = kr + r * 3;
                    if (!all_rows && b0 <= b1)
                      K.axpy3(k3, grow + b0 + pad, grow + b0 + pad - 1,
                              grow + b0 + pad - 2, gxrow + b0, std::size_t(b1 - b0 + 1));
                    for (int c = 0; c < 3; ++c) {
                      const int i0 = std::max(0, c - pad);
                      const int i1 = std::min(w - 1, ow - 1 + c - pad);
                      for (int i_ = i0; i_ < b0 && i_ <= i1; ++i_)
                        gxrow[i_] += k3[c] * grow[i_ + pad - c];
                      for (int i_ = std::max(b1 + 1, i0); i_ <= i1; ++i_)
                        gxrow[i_] += k3[c] * grow[i_ + pad - c];
                    }
                  }
                }
                continue;
              }
              for (int r = 0; r < k; ++r) {
                for (int c = 0; c < k; ++c) {
                  const float kval = kr[r * k + c];
                  for (int orow = 0; orow < oh; ++orow) {
                    const int irow = orow * stride + r - pad;
                    if (irow < 0 || irow >= h) continue;
                    float* gxrow = gxc + std::size_t(irow) * w;
                    const float* grow = gc + std::size_t(orow) * ow;
                    if (stride == 1) {
                      int o0 = std::max(0, pad - c);
                      int o1 = std::min(ow - 1, w - 1 - c + pad);
                      if (o0 > o1) continue;
                      K.axpy(kval, grow + o0, gxrow + o0 + c - pad, std::size_t(o1 - o0 + 1));
                    } else {
                      for (int oc_ = 0; oc_ < ow; ++oc_) {
                        const int icol = oc_ * stride + c - pad;
                        if (icol < 0 || icol >= w) continue;
                        gxrow[icol] += kval * grow[oc_];
                      }
                    }
                  }
                }
              }
            }
          }
        }
      }
      // d/dw: row-segment dot products.
      if (kn->requires_grad) {
        kn->ensure_grad();
        float* gw = kn->g.data();
        const int f0 = std::max(0, pad);
        const int f1 = std::min(ow - 1, w - 3 + pad);
        for (int co = 0; co < cout; ++co) {
          for (int ci = 0; ci < cin; ++ci) {
            if (stride == 1 && k == 3) {
              double acc9[9] = {};
              for (int s = 0; s < slices; ++s) {
                const float* xc = xn->v.data() + (std::size_t(s) * cin + ci) * in_plane;
                const float* gc = g + (std::size_t(s) * cout + co) * out_plane;
                for (int orow = 0; orow < oh; ++orow) {
                  const int ir0 = orow - pad;
                  const float* grow = gc + std::size_t(orow) * ow;
                  const bool all_rows = ir0 >= 0 && ir0 + 2 < h;
                  if (all_rows && f0 <= f1) {
                    const float* x0 = xc + std::size_t(ir0) * w + f0 - pad;
                    double part[9];
                    K.dot3x3(grow + f0, x0, x0 + w, x0 + 2 * w,
                             std::size_t(f1 - f0 + 1), part);
                    for (int j = 0; j < 9; ++j) acc9[j] += part[j];
                  }
                  for (int r = 0; r < 3; ++r) {
                    const int irow = ir0 + r;
                    if (irow < 0 || irow >= h) continue;
                    const float* xrow = xc + std::size_t(irow) * w;
                    if (!all_rows && f0 <= f1) {
                      double part[3];
                      K.dot3(grow + f0, xrow + f0 - pad, xrow + f0 + 1 - pad,
                             xrow + f0 + 2 - pad, std::size_t(f1 - f0 + 1), part);
                      for (int c = 0; c < 3; ++c) acc9[r * 3 + c] += part[c];
                    }
                    for (int c = 0; c < 3; ++c) {
                      const int o0 = std::max(0, pad - c);
                      const int o1 = std::min(ow - 1, w - 1 - c + pad);
                      for (int o_ = o0; o_ < f0 && o_ <= o1; ++o_)
                        acc9[r * 3 + c] += double(grow[o_]) * double(xrow[o_ + c - pad]);
                      for (int o_ = std::max(f1 + 1, o0); o_ <= o1; ++o_)
                        acc9[r * 3 + c] += double(grow[o_]) * double(xrow[o_ + c - pad]);
                    }
                  }
                }
              }
              float* gw9 = gw + (std::size_t(co) * cin + ci) * 9;
              for (int j = 0; j < 9; ++j) gw9[j] += float(acc9[j]);
              continue;
            }
            for (int r = 0; r < k; ++r) {
              for (int c = 0; c < k; ++c) {
                double acc = 0.0;
                for (int s = 0; s < slices; ++s) {
                  const float* xc = xn->v.data() + (std::size_t(s) * cin + ci) * in_plane;
                  const float* gc = g + (std::size_t(s) * cout + co) * out_plane;
                  for (int orow = 0; orow < oh; ++orow) {
                    const int irow = orow * stride + r - pad;
                    if (irow < 0 || irow >= h) continue;
                    const float* xrow = xc + std::size_t(irow) * w;
                    const float* grow = gc + std::size_t(orow) * ow;
                    if (stride == 1) {
                      int o0 = std::max(0, pad - c);
                      int o1 = std::min(ow - 1, w - 1 - c + pad);
                      if (o0 > o1) continue;
                      acc += K.dot(grow + o0, xrow + o0 + c - pad, std::size_t(o1 - o0 + 1));
                    } else {
                      for (int oc_ = 0; oc_ < ow; ++oc_) {
                        const int icol = oc_ * stride + c - pad;
                        if (icol < 0 || icol >= w) continue;
                        acc += double(grow[oc_]) * double(xrow[icol]);
                      }
                    }
                  }
                }
                gw[(std::size_t(co) * cin + ci) * k * k + r * k + c] += float(acc);
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor depthwise_conv2d_valid(const Tensor& x, const std::vector<float>& window, int k) {
  require_rank5(x, "depthwise_conv2d_valid");
  if (int(window.size()) != k * k) throw ParameterError("window size mismatch");
  const Shape& xs = x.shape();
  const int h = xs.h(), w = xs.w();
  const int oh = h - k + 1, ow = w - k + 1;
  if (oh < 1 || ow < 1) throw ShapeError("depthwise_conv2d_valid: window larger than input");
  const bool rec = recording(x);
  Tensor out(Shape::t5(xs.t(), xs.b(), xs.c(), oh, ow), rec);
  const int planes = xs.t() * xs.b() * xs.c();
  const std::size_t ip = plane(xs), op = std::size_t(oh) * ow;
  for (int pi = 0; pi < planes; ++pi) {
    const float* xc = x.data() + std::size_t(pi) * ip;
    float* oc = out.data() + std::size_t(pi) * op;
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c) {
        const float wv = window[std::size_t(r * k + c)];
        for (int orow = 0; orow < oh; ++orow)
          ops().axpy(wv, xc + std::size_t(orow + r) * w + c, oc + std::size_t(orow) * ow,
                     std::size_t(ow));
      }
  }
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    auto win = window;
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int pi = 0; pi < planes; ++pi) {
        float* gx = xn->g.data() + std::size_t(pi) * ip;
        const float* go = on->g.data() + std::size_t(pi) * op;
        for (int r = 0; r < k; ++r)
          for (int c = 0; c < k; ++c) {
            const float wv = win[std::size_t(r * k + c)];
            for (int orow = 0; orow < oh; ++orow)
              ops().axpy(wv, go + std::size_t(orow) * ow, gx + std::size_t(orow + r) * w + c,
                         std::size_t(ow));
          }
      }
    });
  }
  return out;
}

Tensor avgpool2d(const Tensor& x, int window) {
  require_rank5(x, "avgpool2d");
  if (window <= 0) throw ParameterError("avgpool2d: window must be positive");
  if (window == 1) return x;
  const Shape& xs = x.shape();
  if (xs.h() % window != 0 || xs.w() % window != 0) {
    // Reflect-pad up to the next multiple, then pool.
    const int ph = (window - xs.h() % window) % window;
    const int pw = (window - xs.w() % window) % window;
    return avgpool2d(reflect_pad2d(x, 0, ph, 0, pw), window);
  }
  const int h = xs.h(), w = xs.w();
  const int oh = h / window, ow = w / window;
  const bool rec = recording(x);
  Tensor out(Shape::t5(xs.t(), xs.b(), xs.c(), oh, ow), rec);
  const int planes = xs.t() * xs.b() * xs.c();
  const float inv = 1.0f / float(window * window);
  for (int p = 0; p < planes; ++p) {
    const float* xc = x.data() + std::size_t(p) * h * w;
    float* oc = out.data() + std::size_t(p) * oh * ow;
    for (int orow = 0; orow < oh; ++orow)
      for (int ocol = 0; ocol < ow; ++ocol) {
        float acc = 0.0f;
        for (int r = 0; r < window; ++r)
          for (int c = 0; c < window; ++c)
            acc += xc[std::size_t(orow * window + r) * w + ocol * window + c];
        oc[std::size_t(orow) * ow + ocol] = acc * inv;
      }
  }
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int p = 0; p < planes; ++p) {
        float* gx = xn->g.data() + std::size_t(p) * h * w;
        const float* go = on->g.data() + std::size_t(p) * oh * ow;
        for (int orow = 0; orow < oh; ++orow)
          for (int ocol = 0; ocol < ow; ++ocol) {
            const float gv = go[std::size_t(orow) * ow + ocol] * inv;
            for (int r = 0; r < window; ++r)
              for (int c = 0; c < window; ++c)
                gx[std::size_t(orow * window + r) * w + ocol * window + c] += gv;
          }
      }
    });
  }
  return out;
}

Tensor adaptive_gap(const Tensor& x) {
  require_rank5(x, "adaptive_gap");
  const Shape& xs = x.shape();
  const bool rec = recording(x);
  Tensor out(Shape::t5(xs.t(), xs.b(), xs.c(), 1, 1), rec);
  const int planes = xs.t() * xs.b() * xs.c();
  const std::size_t hw = plane(xs);
  for (int p = 0; p < planes; ++p)
    out.data()[p] = float(ops().sum(x.data() + std::size_t(p) * hw, hw) / double(hw));
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const float inv = 1.0f / float(hw);
      for (int p = 0; p < planes; ++p) {
        const float gv = on->g[std::size_t(p)] * inv;
        float* gx = xn->g.data() + std::size_t(p) * hw;
        for (std::size_t i = 0; i < hw; ++i) gx[i] += gv;
      }
    });
  }
  return out;
}

Tensor upsample_nearest(const Tensor& x, int out_h, int out_w) {
  require_rank5(x, "upsample_nearest");
  if (out_h < 1 || out_w < 1) throw ParameterError("upsample_nearest: target dims must be positive");
  const Shape& xs = x.shape();
  if (out_h < xs.h() || out_w < xs.w())
    throw ParameterError("upsample_nearest: target smaller than source");
  const int h = xs.h(), w = xs.w();
  const bool rec = recording(x);
  Tensor out(Shape::t5(xs.t(), xs.b(), xs.c(), out_h, out_w), rec);
  const int planes = xs.t() * xs.b() * xs.c();
  std::vector<int> src_r(std::size_t(out_h), 0), src_c(std::size_t(out_w), 0);
  for (int i = 0; i < out_h; ++i) src_r[std::size_t(i)] = int(std::int64_t(i) * h / out_h);
  for (int j = 0; j < out_w; ++j) src_c[std::size_t(j)] = int(std::int64_t(j) * w / out_w);
  for (int p = 0; p < planes; ++p) {
    const float* xc = x.data() + std::size_t(p) * h * w;
    float* oc = out.data() + std::size_t(p) * out_h * out_w;
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j)
        oc[std::size_t(i) * out_w + j] = xc[std::size_t(src_r[std::size_t(i)]) * w + src_c[std::size_t(j)]];
  }
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int p = 0; p < planes; ++p) {
        float* gx = xn->g.data() + std::size_t(p) * h * w;
        const float* go = on->g.data() + std::size_t(p) * out_h * out_w;
        for (int i = 0; i < out_h; ++i)
          for (int j = 0; j < out_w; ++j)
            gx[std::size_t(src_r[std::size_t(i)]) * w + src_c[std::size_t(j)]] +=
                go[std::size_t(i) * out_w + j];
      }
    });
  }
  return out;
}

namespace {
// align-corners-false sample positions with edge clamping
struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<float> w1;  // weight of i1; weight of i0 is 1-w1
};
LerpAxis lerp_axis(int in, int out) {
  LerpAxis a;
  a.i0.resize(std::size_t(out));
  a.i1.resize(std::size_t(out));
  a.w1.resize(std::size_t(out));
  for (int i = 0; i < out; ++i) {
    double src = (double(i) + 0.5) * double(in) / double(out) - 0.5;
    if (src < 0) src = 0;
    if (src > in - 1) src = in - 1;
    int lo = int(std::floor(src));
    int hi = std::min(lo + 1, in - 1);
    a.i0[std::size_t(i)] = lo;
    a.i1[std::size_t(i)] = hi;
    a.w1[std::size_t(i)] = float(src - lo);
  }
  return a;
}
}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  require_rank5(x, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ParameterError("resize_bilinear: target dims must be positive");
  const Shape& xs = x.shape();
  const int h = xs.h(), w = xs.w();
  const bool rec = recording(x);
  Tensor out(Shape::t5(xs.t(), xs.b(), xs.c(), out_h, out_w), rec);
  const int planes = xs.t() * xs.b() * xs.c();
  const LerpAxis ra = lerp_axis(h, out_h), ca = lerp_axis(w, out_w);
  for (int p = 0; p < planes; ++p) {
    const float* xc = x.data() + std::size_t(p) * h * w;
    float* oc = out.data() + std::size_t(p) * out_h * out_w;
    for (int i = 0; i < out_h; ++i) {
      const float wr = ra.w1[std::size_t(i)];
      const float* r0 = xc + std::size_t(ra.i0[std::size_t(i)]) * w;
      const float* r1 = xc + std::size_t(ra.i1[std::size_t(i)]) * w;
      for (int j = 0; j < out_w; ++j) {
        const float wc = ca.w1[std::size_t(j)];
        const int c0 = ca.i0[std::size_t(j)], c1 = ca.i1[std::size_t(j)];
        oc[std::size_t(i) * out_w + j] =
            (1 - wr) * ((1 - wc) * r0[c0] + wc * r0[c1]) +
            wr * ((1 - wc) * r1[c0] + wc * r1[c1]);
      }
    }
  }
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int p = 0; p < planes; ++p) {
        float* gx = xn->g.data() + std::size_t(p) * h * w;
        const float* go = on->g.data() + std::size_t(p) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
          const float wr = ra.w1[std::size_t(i)];
          float* r0 = gx + std::size_t(ra.i0[std::size_t(i)]) * w;
          float* r1 = gx + std::size_t(ra.i1[std::size_t(i)]) * w;
          for (int j = 0; j < out_w; ++j) {
            const float wc = ca.w1[std::size_t(j)];
            const int c0 = ca.i0[std::size_t(j)], c1 = ca.i1[std::size_t(j)];
            const float gv = go[std::size_t(i) * out_w + j];
            r0[c0] += gv * (1 - wr) * (1 - wc);
            r0[c1] += gv * (1 - wr) * wc;
            r1[c0] += gv * wr * (1 - wc);
            r1[c1] += gv * wr * wc;
          }
        }
      }
    });
  }
  return out;
}

Tensor reflect_pad2d(const Tensor& x, int top, int bottom, int left, int right) {
  require_rank5(x, "reflect_pad2d");
  const Shape& xs = x.shape();
  const int h = xs.h(), w = xs.w();
  if (top >= h || bottom >= h || left >= w || right >= w)
    throw ParameterError("reflect_pad2d: pad must be smaller than the input side");
  const int oh = h + top + bottom, ow = w + left + right;
  auto reflect = [](int i, int n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
  };
  std::vector<int> src_r(std::size_t(oh), 0), src_c(std::size_t(ow), 0);
  for (int i = 0; i < oh; ++i) src_r[std::size_t(i)] = reflect(i - top, h);
  for (int j = 0; j < ow; ++j) src_c[std::size_t(j)] = reflect(j - left, w);
  const bool rec = recording(x);
  Tensor out(Shape::t5(xs.t(), xs.b(), xs.c(), oh, ow), rec);
  const int planes = xs.t() * xs.b() * xs.c();
  for (int p = 0; p < planes; ++p) {
    const float* xc = x.data() + std::size_t(p) * h * w;
    float* oc = out.data() + std::size_t(p) * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j)
        oc[std::size_t(i) * ow + j] = xc[std::size_t(src_r[std::size_t(i)]) * w + src_c[std::size_t(j)]];
  }
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int p = 0; p < planes; ++p) {
        float* gx = xn->g.data() + std::size_t(p) * h * w;
        const float* go = on->g.data() + std::size_t(p) * oh * ow;
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j)
            gx[std::size_t(src_r[std::size_t(i)]) * w + src_c[std::size_t(j)]] +=
                go[std::size_t(i) * ow + j];
      }
    });
  }
  return out;
}

Tensor crop2d(const Tensor& x, int top, int left, int out_h, int out_w) {
  require_rank5(x, "crop2d");
  const Shape& xs = x.shape();
  if (top < 0 || left < 0 || top + out_h > xs.h() || left + out_w > xs.w())
    throw ParameterError("crop2d: window out of range");
  const bool rec = recording(x);
  Tensor out(Shape::t5(xs.t(), xs.b(), xs.c(), out_h, out_w), rec);
  const int planes = xs.t() * xs.b() * xs.c();
  const int h = xs.h(), w = xs.w();
  for (int p = 0; p < planes; ++p)
    for (int i = 0; i < out_h; ++i)
      std::memcpy(out.data() + (std::size_t(p) * out_h + i) * out_w,
                  x.data() + (std::size_t(p) * h + top + i) * w + left,
                  std::size_t(out_w) * sizeof(float));
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int p = 0; p < planes; ++p)
        for (int i = 0; i < out_h; ++i)
          ops().axpy(1.0f, on->g.data() + (std::size_t(p) * out_h + i) * out_w,
                     xn->g.data() + (std::size_t(p) * h + top + i) * w + left,
                     std::size_t(out_w));
    });
  }
  return out;
}

Tensor fft2(const Tensor& x) {
  require_rank5(x, "fft2");
  const Shape& xs = x.shape();
  const int h = xs.h(), w = xs.w(), c = xs.c();
  const bool rec = recording(x);
  Tensor out(Shape::t5(xs.t(), xs.b(), 2 * c, h, w), rec);
  const std::size_t hw = plane(xs);
  std::vector<double> re, im;
  for (int s = 0; s < xs.t() * xs.b(); ++s) {
    for (int ch = 0; ch < c; ++ch) {
      fft::forward2d_real(x.data() + (std::size_t(s) * c + ch) * hw, h, w, re, im);
      float* ore = out.data() + (std::size_t(s) * 2 * c + ch) * hw;
      float* oim = out.data() + (std::size_t(s) * 2 * c + c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        ore[i] = float(re[i]);
        oim[i] = float(im[i]);
      }
    }
  }
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    const int slices = xs.t() * xs.b();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      std::vector<double> gre(hw), gim(hw), rre, rim;
      for (int s = 0; s < slices; ++s) {
        for (int ch = 0; ch < c; ++ch) {
          const float* gr = on->g.data() + (std::size_t(s) * 2 * c + ch) * hw;
          const float* gi = on->g.data() + (std::size_t(s) * 2 * c + c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            gre[i] = gr[i];
            gim[i] = gi[i];
          }
          // Adjoint of the unnormalised forward DFT: conjugate-sign transform,
          // real part.
          fft::transform2d(gre.data(), gim.data(), h, w, +1, rre, rim);
          float* gx = xn->g.data() + (std::size_t(s) * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) gx[i] += float(rre[i]);
        }
      }
    });
  }
  return out;
}

std::array<Tensor, 4> channel_split4(const Tensor& x) {
  require_rank5(x, "channel_split4");
  const Shape& xs = x.shape();
  if (xs.c() % 4 != 0)
    throw ShapeError("channel_split4: C=" + std::to_string(xs.c()) + " not divisible by 4");
  const int c4 = xs.c() / 4;
  const std::size_t hw = plane(xs);
  std::array<Tensor, 4> parts;
  const bool rec = recording(x);
  for (int q = 0; q < 4; ++q) {
    parts[std::size_t(q)] = Tensor(Shape::t5(xs.t(), xs.b(), c4, xs.h(), xs.w()), rec);
    for (int s = 0; s < xs.t() * xs.b(); ++s)
      std::memcpy(parts[std::size_t(q)].data() + std::size_t(s) * c4 * hw,
                  x.data() + (std::size_t(s) * xs.c() + std::size_t(q) * c4) * hw,
                  std::size_t(c4) * hw * sizeof(float));
    if (rec) {
      auto xn = x.node();
      auto pn = parts[std::size_t(q)].node();
      const int slices = xs.t() * xs.b();
      const int cfull = xs.c();
      Tape::active()->record([=]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int s = 0; s < slices; ++s)
          ops().axpy(1.0f, pn->g.data() + std::size_t(s) * c4 * hw,
                     xn->g.data() + (std::size_t(s) * cfull + std::size_t(q) * c4) * hw,
                     std::size_t(c4) * hw);
      });
    }
  }
  return parts;
}

Tensor channel_concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ParameterError("channel_concat: empty list");
  const Shape& s0 = parts[0].shape();
  int ctotal = 0;
  bool rec = false;
  for (const auto& p : parts) {
    require_rank5(p, "channel_concat");
    const Shape& ps = p.shape();
    if (ps.t() != s0.t() || ps.b() != s0.b() || ps.h() != s0.h() || ps.w() != s0.w())
      throw ShapeError("channel_concat: mismatched T/B/H/W");
    ctotal += ps.c();
    rec = rec || recording(p);
  }
  Tensor out(Shape::t5(s0.t(), s0.b(), ctotal, s0.h(), s0.w()), rec);
  const std::size_t hw = plane(s0);
  const int slices = s0.t() * s0.b();
  int coff = 0;
  for (const auto& p : parts) {
    const int pc = p.shape().c();
    for (int s = 0; s < slices; ++s)
      std::memcpy(out.data() + (std::size_t(s) * ctotal + coff) * hw,
                  p.data() + std::size_t(s) * pc * hw, std::size_t(pc) * hw * sizeof(float));
    if (rec) {
      auto pn = p.node();
      auto on = out.node();
      const int off = coff;
      Tape::active()->record([=]() {
        if (!pn->requires_grad) return;
        pn->ensure_grad();
        for (int s = 0; s < slices; ++s)
          ops().axpy(1.0f, on->g.data() + (std::size_t(s) * ctotal + off) * hw,
                     pn->g.data() + std::size_t(s) * pc * hw, std::size_t(pc) * hw);
      });
    }
    coff += pc;
  }
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_ew(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  const bool rec = recording(a, b);
  Tensor out(a.shape(), rec);
  fwd(a.data(), b.data(), out.data(), std::size_t(a.numel()));
  if (rec) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::active()->record([=]() { bwd(an, bn, on); });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(a, b, "add",
      [](const float* x, const float* y, float* o, std::size_t n) { ops().add(x, y, o, n); },
      [](auto an, auto bn, auto on) {
        const std::size_t n = on->g.size();
        if (an->requires_grad) {
          an->ensure_grad();
          ops().axpy(1.0f, on->g.data(), an->g.data(), n);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          ops().axpy(1.0f, on->g.data(), bn->g.data(), n);
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_ew(a, b, "sub",
      [](const float* x, const float* y, float* o, std::size_t n) { ops().sub(x, y, o, n); },
      [](auto an, auto bn, auto on) {
        const std::size_t n = on->g.size();
        if (an->requires_grad) {
          an->ensure_grad();
          ops().axpy(1.0f, on->g.data(), an->g.data(), n);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          ops().axpy(-1.0f, on->g.data(), bn->g.data(), n);
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_ew(a, b, "mul",
      [](const float* x, const float* y, float* o, std::size_t n) { ops().mul(x, y, o, n); },
      [](auto an, auto bn, auto on) {
        const std::size_t n = on->g.size();
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) an->g[i] += on->g[i] * bn->v[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) bn->g[i] += on->g[i] * an->v[i];
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_ew(a, b, "div",
      [](const float* x, const float* y, float* o, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) o[i] = x[i] / y[i];
      },
      [](auto an, auto bn, auto on) {
        const std::size_t n = on->g.size();
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) an->g[i] += on->g[i] / bn->v[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            bn->g[i] -= on->g[i] * an->v[i] / (bn->v[i] * bn->v[i]);
        }
      });
}

Tensor add_const(const Tensor& x, float c) {
  const bool rec = recording(x);
  Tensor out(x.shape(), rec);
  const std::size_t n = std::size_t(x.numel());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] + c;
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      ops().axpy(1.0f, on->g.data(), xn->g.data(), on->g.size());
    });
  }
  return out;
}

Tensor scale(const Tensor& x, float c) {
  const bool rec = recording(x);
  Tensor out(x.shape(), rec);
  ops().scale(c, x.data(), out.data(), std::size_t(x.numel()));
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      ops().axpy(c, on->g.data(), xn->g.data(), on->g.size());
    });
  }
  return out;
}

namespace {

// Broadcast multiply over contiguous blocks: out[block i] = x[block i] * f(i).
// idx_of maps block index -> coefficient index into vec.
template <typename IdxFn>
Tensor mul_bcast(const Tensor& x, const Tensor& vec, std::size_t block,
                 std::size_t nblocks, IdxFn idx_of, const char* name) {
  if (std::size_t(x.numel()) != block * nblocks)
    throw ShapeError(std::string(name) + ": inconsistent block geometry");
  const bool rec = recording(x, vec);
  Tensor out(x.shape(), rec);
  for (std::size_t bi = 0; bi < nblocks; ++bi)
    ops().scale(vec.data()[idx_of(bi)], x.data() + bi * block, out.data() + bi * block, block);
  if (rec) {
    auto xn = x.node();
    auto vn = vec.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t bi = 0; bi < nblocks; ++bi)
          ops().axpy(vn->v[idx_of(bi)], on->g.data() + bi * block, xn->g.data() + bi * block,
                     block);
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        std::vector<double> acc(vn->v.size(), 0.0);
        for (std::size_t bi = 0; bi < nblocks; ++bi)
          acc[idx_of(bi)] += ops().dot(on->g.data() + bi * block, xn->v.data() + bi * block, block);
        for (std::size_t i = 0; i < acc.size(); ++i) vn->g[i] += float(acc[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor mul_channel(const Tensor& x, const Tensor& vec_c) {
  require_rank5(x, "mul_channel");
  const Shape& xs = x.shape();
  if (vec_c.shape().rank() != 1 || vec_c.shape().d[0] != xs.c())
    throw ShapeError("mul_channel: vector length must equal C");
  const std::size_t block = plane(xs);
  const std::size_t nb = std::size_t(xs.t()) * xs.b() * xs.c();
  const int c = xs.c();
  return mul_bcast(x, vec_c, block, nb,
                   [c](std::size_t bi) { return bi % std::size_t(c); }, "mul_channel");
}

Tensor mul_time(const Tensor& x, const Tensor& vec_t) {
  require_rank5(x, "mul_time");
  const Shape& xs = x.shape();
  if (vec_t.shape().rank() != 1 || vec_t.shape().d[0] != xs.t())
    throw ShapeError("mul_time: vector length must equal T");
  const std::size_t block = std::size_t(xs.b()) * xs.c() * plane(xs);
  return mul_bcast(x, vec_t, block, std::size_t(xs.t()),
                   [](std::size_t bi) { return bi; }, "mul_time");
}

Tensor mul_scalar_param(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar_param: scalar parameter expected");
  return mul_bcast(x, s, std::size_t(x.numel()), 1, [](std::size_t) { return std::size_t(0); },
                   "mul_scalar_param");
}

Tensor mul_spatial(const Tensor& x, const Tensor& gate) {
  require_rank5(x, "mul_spatial");
  require_rank5(gate, "mul_spatial");
  const Shape& xs = x.shape();
  const Shape& gs = gate.shape();
  if (gs.t() != xs.t() || gs.b() != xs.b() || gs.c() != 1 || gs.h() != xs.h() || gs.w() != xs.w())
    throw ShapeError("mul_spatial: gate must be (T,B,1,H,W) matching x");
  const bool rec = recording(x, gate);
  Tensor out(xs, rec);
  const std::size_t hw = plane(xs);
  const int slices = xs.t() * xs.b(), c = xs.c();
  for (int s = 0; s < slices; ++s) {
    const float* gp = gate.data() + std::size_t(s) * hw;
    for (int ch = 0; ch < c; ++ch)
      ops().mul(x.data() + (std::size_t(s) * c + ch) * hw, gp,
                out.data() + (std::size_t(s) * c + ch) * hw, hw);
  }
  if (rec) {
    auto xn = x.node();
    auto gn = gate.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int s = 0; s < slices; ++s)
          for (int ch = 0; ch < c; ++ch) {
            const float* go = on->g.data() + (std::size_t(s) * c + ch) * hw;
            const float* gp = gn->v.data() + std::size_t(s) * hw;
            float* gx = xn->g.data() + (std::size_t(s) * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) gx[i] += go[i] * gp[i];
          }
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int s = 0; s < slices; ++s)
          for (int ch = 0; ch < c; ++ch) {
            const float* go = on->g.data() + (std::size_t(s) * c + ch) * hw;
            const float* xv = xn->v.data() + (std::size_t(s) * c + ch) * hw;
            float* gg = gn->g.data() + std::size_t(s) * hw;
            for (std::size_t i = 0; i < hw; ++i) gg[i] += go[i] * xv[i];
          }
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  const bool rec = recording(x);
  Tensor out(x.shape(), rec);
  const std::size_t n = std::size_t(x.numel());
  for (std::size_t i = 0; i < n; ++i)
    out.data()[i] = 1.0f / (1.0f + std::exp(-x.data()[i]));
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->g.size(); ++i)
        xn->g[i] += on->g[i] * on->v[i] * (1.0f - on->v[i]);
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const bool rec = recording(x);
  Tensor out(x.shape(), rec);
  const std::size_t n = std::size_t(x.numel());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > 0 ? x.data()[i] : 0.0f;
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->g.size(); ++i)
        if (xn->v[i] > 0) xn->g[i] += on->g[i];
    });
  }
  return out;
}

Tensor linear(const Tensor& vec, const Tensor& weight, const Tensor& bias) {
  if (vec.shape().rank() != 1 || weight.shape().rank() != 2 || bias.shape().rank() != 1)
    throw ShapeError("linear: expected vec rank1, weight rank2, bias rank1");
  const int n = vec.shape().d[0];
  const int m = weight.shape().d[0];
  if (weight.shape().d[1] != n || bias.shape().d[0] != m)
    throw ShapeError("linear: dimension mismatch");
  const bool rec = Tape::active() &&
                   (vec.requires_grad() || weight.requires_grad() || bias.requires_grad());
  Tensor out(Shape{m}, rec);
  for (int i = 0; i < m; ++i)
    out.data()[i] = bias.data()[i] +
                    float(ops().dot(weight.data() + std::size_t(i) * n, vec.data(), std::size_t(n)));
  if (rec) {
    auto vn = vec.node();
    auto wn = weight.node();
    auto bn = bias.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < m; ++i) bn->g[std::size_t(i)] += on->g[std::size_t(i)];
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int i = 0; i < m; ++i)
          ops().axpy(on->g[std::size_t(i)], vn->v.data(), wn->g.data() + std::size_t(i) * n,
                     std::size_t(n));
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (int i = 0; i < m; ++i)
          ops().axpy(on->g[std::size_t(i)], wn->v.data() + std::size_t(i) * n, vn->g.data(),
                     std::size_t(n));
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  const bool rec = recording(x);
  Tensor out(Shape{1}, rec);
  out.data()[0] = float(ops().sum(x.data(), std::size_t(x.numel())));
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const float g = on->g[0];
      for (auto& gv : xn->g) gv += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  const bool rec = recording(x);
  Tensor out(Shape{1}, rec);
  const std::size_t n = std::size_t(x.numel());
  out.data()[0] = float(ops().sum(x.data(), n) / double(n));
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const float g = on->g[0] / float(n);
      for (auto& gv : xn->g) gv += g;
    });
  }
  return out;
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_mean");
  const bool rec = recording(a, b);
  Tensor out(Shape{1}, rec);
  const std::size_t n = std::size_t(a.numel());
  out.data()[0] = float(ops().abs_diff_sum(a.data(), b.data(), n) / double(n));
  if (rec) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      const float g = on->g[0] / float(n);
      for (std::size_t i = 0; i < n; ++i) {
        const float d = an->v[i] - bn->v[i];
        const float sgn = d > 0 ? 1.0f : (d < 0 ? -1.0f : 0.0f);
        if (an->requires_grad) {
          an->ensure_grad();
          an->g[i] += g * sgn;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->g[i] -= g * sgn;
        }
      }
    });
  }
  return out;
}

Tensor temporal_mean(const Tensor& x) {
  require_rank5(x, "temporal_mean");
  const Shape& xs = x.shape();
  const bool rec = recording(x);
  Tensor out(Shape::t5(1, xs.b(), xs.c(), xs.h(), xs.w()), rec);
  const std::size_t block = std::size_t(xs.b()) * xs.c() * plane(xs);
  const float inv = 1.0f / float(xs.t());
  for (int t = 0; t < xs.t(); ++t)
    ops().axpy(inv, x.data() + std::size_t(t) * block, out.data(), block);
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    const int tt = xs.t();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int t = 0; t < tt; ++t)
        ops().axpy(inv, on->g.data(), xn->g.data() + std::size_t(t) * block, block);
    });
  }
  return out;
}

Tensor mean_over_bchw(const Tensor& x) {
  require_rank5(x, "mean_over_bchw");
  const Shape& xs = x.shape();
  const bool rec = recording(x);
  Tensor out(Shape{xs.t()}, rec);
  const std::size_t block = std::size_t(xs.b()) * xs.c() * plane(xs);
  for (int t = 0; t < xs.t(); ++t)
    out.data()[t] = float(ops().sum(x.data() + std::size_t(t) * block, block) / double(block));
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    const int tt = xs.t();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int t = 0; t < tt; ++t) {
        const float g = on->g[std::size_t(t)] / float(block);
        float* gx = xn->g.data() + std::size_t(t) * block;
        for (std::size_t i = 0; i < block; ++i) gx[i] += g;
      }
    });
  }
  return out;
}

Tensor mean_over_tbhw(const Tensor& x) {
  require_rank5(x, "mean_over_tbhw");
  const Shape& xs = x.shape();
  const bool rec = recording(x);
  Tensor out(Shape{xs.c()}, rec);
  const std::size_t hw = plane(xs);
  const int slices = xs.t() * xs.b(), c = xs.c();
  const double denom = double(slices) * double(hw);
  std::vector<double> acc(std::size_t(c), 0.0);
  for (int s = 0; s < slices; ++s)
    for (int ch = 0; ch < c; ++ch)
      acc[std::size_t(ch)] += ops().sum(x.data() + (std::size_t(s) * c + ch) * hw, hw);
  for (int ch = 0; ch < c; ++ch) out.data()[ch] = float(acc[std::size_t(ch)] / denom);
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int s = 0; s < slices; ++s)
        for (int ch = 0; ch < c; ++ch) {
          const float g = on->g[std::size_t(ch)] / float(denom);
          float* gx = xn->g.data() + (std::size_t(s) * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) gx[i] += g;
        }
    });
  }
  return out;
}

Tensor mean_over_c(const Tensor& x) {
  require_rank5(x, "mean_over_c");
  const Shape& xs = x.shape();
  const bool rec = recording(x);
  Tensor out(Shape::t5(xs.t(), xs.b(), 1, xs.h(), xs.w()), rec);
  const std::size_t hw = plane(xs);
  const int slices = xs.t() * xs.b(), c = xs.c();
  const float inv = 1.0f / float(c);
  for (int s = 0; s < slices; ++s)
    for (int ch = 0; ch < c; ++ch)
      ops().axpy(inv, x.data() + (std::size_t(s) * c + ch) * hw,
                 out.data() + std::size_t(s) * hw, hw);
  if (rec) {
    auto xn = x.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int s = 0; s < slices; ++s)
        for (int ch = 0; ch < c; ++ch)
          ops().axpy(inv, on->g.data() + std::size_t(s) * hw,
                     xn->g.data() + (std::size_t(s) * c + ch) * hw, hw);
    });
  }
  return out;
}

Tensor replicate_temporal(const Tensor& img, int t) {
  require_rank5(img, "replicate_temporal");
  if (t < 1) throw ParameterError("replicate_temporal: T >= 1 required");
  const Shape& xs = img.shape();
  if (xs.t() != 1) throw ShapeError("replicate_temporal: input must have T == 1");
  const bool rec = recording(img);
  Tensor out(Shape::t5(t, xs.b(), xs.c(), xs.h(), xs.w()), rec);
  const std::size_t block = std::size_t(xs.b()) * xs.c() * plane(xs);
  for (int i = 0; i < t; ++i)
    std::memcpy(out.data() + std::size_t(i) * block, img.data(), block * sizeof(float));
  if (rec) {
    auto xn = img.node();
    auto on = out.node();
    Tape::active()->record([=]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int i = 0; i < t; ++i)
        ops().axpy(1.0f, on->g.data() + std::size_t(i) * block, xn->g.data(), block);
    });
  }
  return out;
}

}  // namespace uiesnn::ops

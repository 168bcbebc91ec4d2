#include "uiesnn/fft.hpp"

#include <cmath>
#include <complex>

namespace uiesnn::fft {
namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey on a strided line.
void fft_line_pow2(std::complex<double>* a, int n, int stride, int sign) {
  // bit reversal
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(a[std::size_t(i) * stride], a[std::size_t(j) * stride]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    double ang = sign * 2.0 * kPi / len;
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        auto& u = a[std::size_t(i + j) * stride];
        auto& v = a[std::size_t(i + j + len / 2) * stride];
        std::complex<double> t = v * w;
        v = u - t;
        u = u + t;
        w *= wl;
      }
    }
  }
}

void dft_line_direct(std::complex<double>* a, int n, int stride, int sign) {
  std::vector<std::complex<double>> out(std::size_t(n), std::complex<double>{});
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int m = 0; m < n; ++m) {
      double ang = sign * 2.0 * kPi * double(k) * double(m) / double(n);
      acc += a[std::size_t(m) * stride] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[std::size_t(k)] = acc;
  }
  for (int k = 0; k < n; ++k) a[std::size_t(k) * stride] = out[std::size_t(k)];
}

void transform_line(std::complex<double>* a, int n, int stride, int sign) {
  if (n == 1) return;
  if (is_pow2(n))
    fft_line_pow2(a, n, stride, sign);
  else
    dft_line_direct(a, n, stride, sign);
}

}  // namespace

void transform2d(const double* re_in, const double* im_in, int h, int w,
                 int sign, std::vector<double>& re_out, std::vector<double>& im_out) {
  std::vector<std::complex<double>> buf(std::size_t(h) * w);
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = {re_in[i], im_in ? im_in[i] : 0.0};
  for (int r = 0; r < h; ++r) transform_line(buf.data() + std::size_t(r) * w, w, 1, sign);
  for (int c = 0; c < w; ++c) transform_line(buf.data() + c, h, w, sign);
  re_out.resize(buf.size());
  im_out.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    re_out[i] = buf[i].real();
    im_out[i] = buf[i].imag();
  }
}

void forward2d_real(const float* in, int h, int w,
                    std::vector<double>& re_out, std::vector<double>& im_out) {
  std::vector<double> re(std::size_t(h) * w);
  for (std::size_t i = 0; i < re.size(); ++i) re[i] = in[i];
  transform2d(re.data(), nullptr, h, w, -1, re_out, im_out);
}

void inverse2d(const double* re_in, const double* im_in, int h, int w,
               std::vector<double>& re_out, std::vector<double>& im_out) {
  transform2d(re_in, im_in, h, w, +1, re_out, im_out);
  double norm = 1.0 / (double(h) * double(w));
  for (auto& v : re_out) v *= norm;
  for (auto& v : im_out) v *= norm;
}

}  // namespace uiesnn::fft

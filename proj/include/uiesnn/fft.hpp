#pragma once

#include <vector>

namespace uiesnn::fft {

// Unnormalised 2-D DFT of one H x W plane. sign = -1 is the forward
// transform, sign = +1 the conjugate (inverse without the 1/(H*W) factor).
// Radix-2 FFT along power-of-two sides, direct summation otherwise.
void transform2d(const double* re_in, const double* im_in, int h, int w,
                 int sign, std::vector<double>& re_out, std::vector<double>& im_out);

// Forward transform of a real plane.
void forward2d_real(const float* in, int h, int w,
                    std::vector<double>& re_out, std::vector<double>& im_out);

// Normalised inverse: inverse2d(forward2d(x)) == x up to rounding.
void inverse2d(const double* re_in, const double* im_in, int h, int w,
               std::vector<double>& re_out, std::vector<double>& im_out);

}  // namespace uiesnn::fft

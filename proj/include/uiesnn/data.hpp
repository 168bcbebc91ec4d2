#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "uiesnn/tensor.hpp"

namespace uiesnn {

// Raised for dataset-level problems (missing directories, unpaired files,
// empty datasets). File parse problems raise FormatError (tensor.hpp /
// network.hpp already define it for checkpoints; data.hpp reuses it).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CHW float image in [0,1].
struct ImageRGB {
  int h = 0, w = 0;
  std::vector<float> v;  // 3*h*w, channel-major

  ImageRGB() = default;
  ImageRGB(int h_, int w_) : h(h_), w(w_), v(std::size_t(3) * h_ * w_, 0.0f) {}
  float& at(int c, int y, int x) {
    return v[(std::size_t(c) * h + y) * w + x];
  }
  float at(int c, int y, int x) const {
    return v[(std::size_t(c) * h + y) * w + x];
  }
};

// Supports PPM (P6, maxval 255) and 8-bit RGB PNG, picked by file extension.
// Malformed PPM input raises FormatError naming the byte offset.
ImageRGB load_image(const std::string& path);
void save_image(const ImageRGB& img, const std::string& path);

// Synthetic underwater degradation:
//   out = (1 - beta) * (gaussian_blur(x, sigma) * cast) + beta * veil
// clamped to [0,1]. Identity when beta=0, cast=(1,1,1), sigma=0.
struct DegradeParams {
  std::array<float, 3> cast{1.0f, 1.0f, 1.0f};  // per-channel attenuation
  std::array<float, 3> veil{0.1f, 0.45f, 0.55f};
  float beta = 0.0f;        // veil mixing, [0,1]
  float blur_sigma = 0.0f;  // scattering blur, >= 0
};

ImageRGB degrade(const ImageRGB& clean, const DegradeParams& p);

// Draws degradation parameters from the default training ranges: cast in
// [0.4,1.0] with red attenuated most, beta in [0.1,0.5], sigma in [0.5,2.0].
DegradeParams random_degrade_params(std::mt19937& rng);

// Procedural multi-frequency texture (sinusoid mixtures plus smooth
// gradients), deterministic per seed; provides ground truth for the
// synthetic dataset.
ImageRGB synth_texture(int h, int w, unsigned seed);

// Writes `count` pairs root/gt/sample%03d.ppm + root/input/sample%03d.ppm,
// inputs degraded with seed-driven parameters.
void generate_synthetic_dataset(const std::string& root, int count, int h,
                                int w, unsigned seed);

// Paired directory layout: root/input/* and root/gt/* matched by filename
// stem. Throws DataError when a directory is missing, a file is unpaired, or
// no pairs exist.
class PairedDataset {
 public:
  // Strict mode (default) throws on unpaired files; otherwise they are
  // skipped and listed in warnings().
  explicit PairedDataset(const std::string& root, bool allow_unpaired = false);

  std::size_t size() const { return stems_.size(); }
  const std::string& stem(std::size_t i) const { return stems_[i]; }
  ImageRGB input(std::size_t i) const;
  ImageRGB gt(std::size_t i) const;
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<std::string> stems_;
  std::vector<std::string> input_paths_, gt_paths_;
  std::vector<std::string> warnings_;
};

// Aligned random crops with random horizontal flips. Images smaller than the
// patch are reflect-padded. Tensors are rank-5 with T=1: (1,B,3,patch,patch).
struct PairBatch {
  Tensor degraded, clean;
  std::vector<std::string> sources;
};

PairBatch sample_patches(const PairedDataset& ds, int patch, int batch,
                         std::mt19937& rng);

// Conversions between ImageRGB and rank-5 (1,1,3,H,W) tensors.
Tensor image_to_tensor(const ImageRGB& img);
ImageRGB tensor_to_image(const Tensor& t);

}  // namespace uiesnn

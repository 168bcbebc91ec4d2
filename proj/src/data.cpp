#include "uiesnn/data.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

namespace fs = std::filesystem;

namespace uiesnn {

namespace {

bool has_ext(const std::string& path, const char* ext) {
  std::string e = fs::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return e == ext;
}

float byte_to_float(unsigned char b) { return float(b) / 255.0f; }

unsigned char float_to_byte(float f) {
  const float c = std::clamp(f, 0.0f, 1.0f);
  return (unsigned char)std::lround(c * 255.0f);
}

[[noreturn]] void ppm_fail(const std::string& path, std::size_t offset,
                           const std::string& what) {
  throw FormatError(path + ": " + what + " at byte offset " +
                    std::to_string(offset));
}

ImageRGB load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace((unsigned char)bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* field) {
    skip_space();
    const std::size_t start = pos;
    long value = 0;
    while (pos < bytes.size() && std::isdigit((unsigned char)bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1 << 20) ppm_fail(path, start, std::string(field) + " too large");
      ++pos;
    }
    if (pos == start) ppm_fail(path, start, std::string("missing ") + field);
    return int(value);
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    ppm_fail(path, 0, "not a P6 PPM (bad magic)");
  pos = 2;
  const int w = read_int("width");
  const int h = read_int("height");
  const int maxval = read_int("maxval");
  if (w < 1 || h < 1) ppm_fail(path, pos, "non-positive dimensions");
  if (maxval != 255) ppm_fail(path, pos, "unsupported maxval (expect 255)");
  if (pos >= bytes.size() || !std::isspace((unsigned char)bytes[pos]))
    ppm_fail(path, pos, "missing whitespace after header");
  ++pos;  // exactly one whitespace byte before the payload

  const std::size_t need = std::size_t(3) * w * h;
  if (bytes.size() - pos < need)
    ppm_fail(path, bytes.size(), "truncated pixel payload (need " +
                                     std::to_string(need) + " bytes)");
  ImageRGB img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = byte_to_float((unsigned char)bytes[pos++]);
  return img;
}

void save_ppm(const ImageRGB& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P6\n" << img.w << ' ' << img.h << "\n255\n";
  std::vector<unsigned char> row(std::size_t(3) * img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        row[std::size_t(3) * x + c] = float_to_byte(img.at(c, y, x));
    out.write(reinterpret_cast<const char*>(row.data()),
              std::streamsize(row.size()));
  }
  if (!out) throw DataError("short write to " + path);
}

ImageRGB load_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw FormatError(path + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw FormatError(path + ": " + msg);
  }
  ImageRGB img(int(png.height), int(png.width));
  std::size_t p = 0;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = byte_to_float(raw[p++]);
  return img;
}

void save_png(const ImageRGB& img, const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(img.w);
  png.height = png_uint_32(img.h);
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> raw(std::size_t(3) * img.w * img.h);
  std::size_t p = 0;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) raw[p++] = float_to_byte(img.at(c, y, x));
  if (!png_image_write_to_file(&png, path.c_str(), 0, raw.data(), 0, nullptr))
    throw DataError(path + ": " + png.message);
}

// separable Gaussian, reflect padding, kernel truncated at 3 sigma
ImageRGB gaussian_blur(const ImageRGB& img, float sigma) {
  if (sigma <= 0.0f) return img;
  const int radius = std::max(1, int(std::ceil(3.0f * sigma)));
  std::vector<float> kern(std::size_t(2) * radius + 1, 0.0f);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kern[std::size_t(i + radius)] =
        float(std::exp(-double(i) * i / (2.0 * sigma * sigma)));
    sum += kern[std::size_t(i + radius)];
  }
  for (auto& k : kern) k = float(k / sum);

  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };

  ImageRGB tmp(img.h, img.w), out(img.h, img.w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i)
          acc += kern[std::size_t(i + radius)] *
                 img.at(c, y, reflect(x + i, img.w));
        tmp.at(c, y, x) = acc;
      }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i)
          acc += kern[std::size_t(i + radius)] *
                 tmp.at(c, reflect(y + i, img.h), x);
        out.at(c, y, x) = acc;
      }
  return out;
}

ImageRGB reflect_pad_to(const ImageRGB& img, int h, int w) {
  if (img.h >= h && img.w >= w) return img;
  ImageRGB out(std::max(img.h, h), std::max(img.w, w));
  auto reflect = [](int i, int n) {
    while (i >= n) i = 2 * n - 1 - i > 0 ? 2 * n - 1 - i : 0;
    return i;
  };
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        out.at(c, y, x) = img.at(c, reflect(y, img.h), reflect(x, img.w));
  return out;
}

}  // namespace

ImageRGB load_image(const std::string& path) {
  if (has_ext(path, ".png")) return load_png(path);
  if (has_ext(path, ".ppm")) return load_ppm(path);
  throw DataError("unsupported image extension: " + path);
}

void save_image(const ImageRGB& img, const std::string& path) {
  if (img.h < 1 || img.w < 1 || img.v.size() != std::size_t(3) * img.h * img.w)
    throw UsageError("save_image: malformed ImageRGB");
  if (has_ext(path, ".png")) return save_png(img, path);
  if (has_ext(path, ".ppm")) return save_ppm(img, path);
  throw DataError("unsupported image extension: " + path);
}

ImageRGB degrade(const ImageRGB& clean, const DegradeParams& p) {
  ImageRGB blurred = gaussian_blur(clean, p.blur_sigma);
  ImageRGB out(clean.h, clean.w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < clean.h; ++y)
      for (int x = 0; x < clean.w; ++x) {
        const float v =
            (1.0f - p.beta) * blurred.at(c, y, x) * p.cast[std::size_t(c)] +
            p.beta * p.veil[std::size_t(c)];
        out.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
      }
  return out;
}

DegradeParams random_degrade_params(std::mt19937& rng) {
  auto uni = [&](float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(rng);
  };
  DegradeParams p;
  // red absorbs fastest under water: draw it low, keep it the minimum
  p.cast[0] = uni(0.4f, 0.7f);
  p.cast[1] = std::max(p.cast[0], uni(0.55f, 0.9f));
  p.cast[2] = std::max(p.cast[0], uni(0.7f, 1.0f));
  p.veil = {uni(0.0f, 0.15f), uni(0.3f, 0.55f), uni(0.4f, 0.65f)};
  p.beta = uni(0.1f, 0.5f);
  p.blur_sigma = uni(0.5f, 2.0f);
  return p;
}

ImageRGB synth_texture(int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  ImageRGB img(h, w);

  struct Wave {
    float fy, fx, phase, amp;
  };
  std::array<std::array<Wave, 4>, 3> waves{};
  std::array<std::array<float, 3>, 3> grad{};  // base, dy, dx per channel
  for (int c = 0; c < 3; ++c) {
    grad[std::size_t(c)] = {0.35f + 0.3f * uni(rng), 0.3f * (uni(rng) - 0.5f),
                            0.3f * (uni(rng) - 0.5f)};
    for (auto& wv : waves[std::size_t(c)])
      wv = {1.0f + 7.0f * uni(rng), 1.0f + 7.0f * uni(rng),
            6.2831853f * uni(rng), 0.05f + 0.1f * uni(rng)};
  }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float ny = float(y) / float(h), nx = float(x) / float(w);
        float v = grad[std::size_t(c)][0] + grad[std::size_t(c)][1] * ny +
                  grad[std::size_t(c)][2] * nx;
        for (const Wave& wv : waves[std::size_t(c)])
          v += wv.amp * std::sin(6.2831853f * (wv.fy * ny + wv.fx * nx) +
                                 wv.phase);
        img.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
      }
  return img;
}

void generate_synthetic_dataset(const std::string& root, int count, int h,
                                int w, unsigned seed) {
  fs::create_directories(fs::path(root) / "gt");
  fs::create_directories(fs::path(root) / "input");
  std::mt19937 rng(seed);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample%03d.ppm", i);
    const ImageRGB clean = synth_texture(h, w, seed + 1000u * unsigned(i) + 1u);
    const ImageRGB dirty = degrade(clean, random_degrade_params(rng));
    save_image(clean, (fs::path(root) / "gt" / name).string());
    save_image(dirty, (fs::path(root) / "input" / name).string());
  }
}

PairedDataset::PairedDataset(const std::string& root, bool allow_unpaired) {
  const fs::path in_dir = fs::path(root) / "input";
  const fs::path gt_dir = fs::path(root) / "gt";
  if (!fs::is_directory(in_dir) || !fs::is_directory(gt_dir))
    throw DataError("dataset root must contain input/ and gt/: " + root);

  auto scan = [](const fs::path& dir) {
    std::map<std::string, std::string> by_stem;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      const std::string ext = e.path().extension().string();
      if (ext != ".ppm" && ext != ".png") continue;
      by_stem[e.path().stem().string()] = e.path().string();
    }
    return by_stem;
  };
  const auto inputs = scan(in_dir);
  const auto gts = scan(gt_dir);
  for (const auto& [stem, path] : inputs) {
    const auto it = gts.find(stem);
    if (it == gts.end()) {
      if (!allow_unpaired)
        throw DataError("input image '" + stem + "' has no gt counterpart");
      warnings_.push_back("skipped input '" + stem + "': no gt counterpart");
      continue;
    }
    stems_.push_back(stem);
    input_paths_.push_back(path);
    gt_paths_.push_back(it->second);
  }
  for (const auto& [stem, path] : gts)
    if (!inputs.count(stem)) {
      if (!allow_unpaired)
        throw DataError("gt image '" + stem + "' has no input counterpart");
      warnings_.push_back("skipped gt '" + stem + "': no input counterpart");
    }
  if (stems_.empty()) throw DataError("no image pairs under " + root);
}

ImageRGB PairedDataset::input(std::size_t i) const {
  return load_image(input_paths_.at(i));
}
ImageRGB PairedDataset::gt(std::size_t i) const {
  return load_image(gt_paths_.at(i));
}

PairBatch sample_patches(const PairedDataset& ds, int patch, int batch,
                         std::mt19937& rng) {
  if (patch < 1 || batch < 1)
    throw ParameterError("sample_patches: patch and batch must be positive");
  PairBatch out;
  out.degraded = Tensor(Shape::t5(1, batch, 3, patch, patch));
  out.clean = Tensor(Shape::t5(1, batch, 3, patch, patch));
  for (int b = 0; b < batch; ++b) {
    const std::size_t idx = rng() % ds.size();
    ImageRGB in = reflect_pad_to(ds.input(idx), patch, patch);
    ImageRGB gt = reflect_pad_to(ds.gt(idx), patch, patch);
    if (in.h != gt.h || in.w != gt.w)
      throw DataError("pair '" + ds.stem(idx) + "' has mismatched sizes");
    const int oy = (in.h == patch) ? 0 : int(rng() % unsigned(in.h - patch + 1));
    const int ox = (in.w == patch) ? 0 : int(rng() % unsigned(in.w - patch + 1));
    const bool flip = (rng() & 1u) != 0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x) {
          const int sx = flip ? (ox + patch - 1 - x) : (ox + x);
          out.degraded.at(0, b, c, y, x) = in.at(c, oy + y, sx);
          out.clean.at(0, b, c, y, x) = gt.at(c, oy + y, sx);
        }
    out.sources.push_back(ds.stem(idx));
  }
  return out;
}

Tensor image_to_tensor(const ImageRGB& img) {
  Tensor t(Shape::t5(1, 1, 3, img.h, img.w));
  std::copy(img.v.begin(), img.v.end(), t.values().begin());
  return t;
}

ImageRGB tensor_to_image(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.t() != 1 || s.b() != 1 || s.c() != 3)
    throw ShapeError("tensor_to_image expects (1,1,3,H,W), got " + s.str());
  ImageRGB img(s.h(), s.w());
  std::copy(t.values().begin(), t.values().end(), img.v.begin());
  for (auto& v : img.v) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

}  // namespace uiesnn

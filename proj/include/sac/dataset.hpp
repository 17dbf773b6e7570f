#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sac/common.hpp"
#include "sac/image.hpp"
#include "sac/manifest.hpp"
#include "sac/rng.hpp"
#include "sac/tensor.hpp"

namespace sac {

// Unit of training and evaluation: image in [0,1], mask in {0,1}, same H x W.
struct ImageSample {
  std::string id;
  Tensor image;  // [H, W, 3]
  Tensor mask;   // [H, W]

  int resolution() const { return image.shape.empty() ? 0 : image.shape[0]; }
};

// Image resized smoothly and rescaled to [0,1]; mask resized nearest-neighbor
// then binarized. Inputs may be 8-bit intensities or already in [0,1] / {0,1};
// the threshold adapts to the value scale so the operation is idempotent.
inline ImageSample prepare_sample(const Image& raw_image, const Image& raw_mask, int target,
                                  const std::string& id = "") {
  require(target >= 1, Errc::config, strf("target resolution must be positive, got %d", target));
  require(raw_image.h == raw_mask.h && raw_image.w == raw_mask.w, Errc::shape,
          strf("image %dx%d and mask %dx%d differ", raw_image.h, raw_image.w, raw_mask.h, raw_mask.w));
  require(raw_image.c == 3 && raw_mask.c == 1, Errc::shape, "expect RGB image and single-channel mask");
  require(raw_image.h >= 1 && raw_image.w >= 1, Errc::shape, "empty input raster");

  Image im = resize_bilinear(raw_image, target, target);
  double imax = 0.0;
  for (double v : im.px) imax = std::max(imax, v);
  double scale = imax > 1.5 ? 1.0 / 255.0 : 1.0;

  ImageSample s;
  s.id = id;
  s.image = Tensor({target, target, 3});
  for (size_t i = 0; i < im.px.size(); ++i) s.image[i] = std::clamp(im.px[i] * scale, 0.0, 1.0);

  Image mk = resize_nearest(raw_mask, target, target);
  double mmax = 0.0;
  for (double v : mk.px) mmax = std::max(mmax, v);
  double thresh = mmax > 1.0 ? 127.0 : 0.5;
  s.mask = Tensor({target, target});
  for (size_t i = 0; i < mk.px.size(); ++i) s.mask[i] = mk.px[i] > thresh ? 1.0 : 0.0;
  return s;
}

inline ImageSample load_sample(const DatasetManifest& m, size_t index, int target) {
  require(index < m.entries.size(), Errc::config, "sample index out of range");
  const auto& e = m.entries[index];
  Image img = load_image(m.resolve(e.image), 3);
  Image msk = load_image(m.resolve(e.mask), 1);
  std::string id = std::filesystem::path(e.image).stem().string();
  return prepare_sample(img, msk, target, id);
}

// ---------------------------------------------------------------------------
// Synthetic crack pairs: textured bright background, thin dark polylines,
// exact masks. Desk-scale stand-in for the real corpora.
// ---------------------------------------------------------------------------

namespace detail {

inline void stamp(Image& img, Image& mask, double cy, double cx, int radius, double intensity,
                  Rng& rng) {
  int y0 = std::max(0, static_cast<int>(std::floor(cy)) - radius);
  int y1 = std::min(img.h - 1, static_cast<int>(std::floor(cy)) + radius);
  int x0 = std::max(0, static_cast<int>(std::floor(cx)) - radius);
  int x1 = std::min(img.w - 1, static_cast<int>(std::floor(cx)) + radius);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dy = y - cy, dx = x - cx;
      if (dy * dy + dx * dx > radius * radius + 0.25) continue;
      mask.at(y, x) = 255.0;
      double v = std::clamp(intensity + rng.normal(0.0, 5.0), 0.0, 90.0);
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = v;
    }
}

}  // namespace detail

inline std::pair<Image, Image> synth_crack_pair(int size, Rng& rng) {
  require(size >= 8, Errc::config, "synthetic images need size >= 8");
  Image img(size, size, 3);
  Image mask(size, size, 1, 0.0);

  // background: coarse value-noise, bilinearly upsampled, mild channel tint
  const int grid = 5;
  Image coarse(grid, grid, 3);
  double tint[3] = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
  for (int y = 0; y < grid; ++y)
    for (int x = 0; x < grid; ++x) {
      double base = rng.uniform(155.0, 205.0);
      for (int ch = 0; ch < 3; ++ch) coarse.at(y, x, ch) = std::clamp(base + tint[ch], 120.0, 235.0);
    }
  img = resize_bilinear(coarse, size, size);
  for (auto& v : img.px) v = std::clamp(v + rng.normal(0.0, 4.0), 0.0, 255.0);

  int n_cracks = 1 + static_cast<int>(rng.below(3));
  size_t budget = static_cast<size_t>(0.18 * size * size);  // keep positives well under 25%
  for (int k = 0; k < n_cracks; ++k) {
    size_t painted = 0;
    for (double v : mask.px) painted += v > 0 ? 1 : 0;
    if (k > 0 && painted >= budget) break;

    double cy = rng.uniform(0.15 * size, 0.85 * size);
    double cx = rng.uniform(0.15 * size, 0.85 * size);
    double theta = rng.uniform(0.0, 6.283185307179586);
    int radius = rng.below(3) == 2 ? 2 : 1;
    double intensity = rng.uniform(10.0, 50.0);
    int steps = static_cast<int>(size * rng.uniform(0.7, 1.3));
    for (int t = 0; t < steps; ++t) {
      detail::stamp(img, mask, cy, cx, radius, intensity, rng);
      theta += rng.normal(0.0, 0.18);
      cy += std::sin(theta);
      cx += std::cos(theta);
      if (cy < 1 || cx < 1 || cy > size - 2 || cx > size - 2) break;
    }
  }
  return {img, mask};
}

// Writes n PNG pairs plus a manifest under out_dir; bit-identical for a fixed
// (n, size, seed) regardless of generation order.
inline DatasetManifest synth_crack_dataset(int n, int size, uint64_t seed, const std::string& out_dir,
                                           const std::string& name = "synthetic-cracks",
                                           Split split = Split::train) {
  require(n >= 1, Errc::config, "need n >= 1 samples");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  DatasetManifest m;
  m.name = name;
  m.split = split;
  m.base_dir = out_dir;
  Rng root(seed);
  for (int i = 0; i < n; ++i) {
    Rng rng = root.fork(static_cast<uint64_t>(i));
    auto [img, mask] = synth_crack_pair(size, rng);
    std::string img_rel = strf("images/img_%05d.png", i);
    std::string mask_rel = strf("masks/mask_%05d.png", i);
    save_png((fs::path(out_dir) / img_rel).string(), img);
    save_png((fs::path(out_dir) / mask_rel).string(), mask);
    m.entries.push_back({img_rel, mask_rel});
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
  return m;
}

// In-memory variant for tests and stubbed trials.
inline std::vector<ImageSample> synth_samples(int n, int size, uint64_t seed) {
  require(n >= 1, Errc::config, "need n >= 1 samples");
  std::vector<ImageSample> out;
  Rng root(seed);
  for (int i = 0; i < n; ++i) {
    Rng rng = root.fork(static_cast<uint64_t>(i));
    auto [img, mask] = synth_crack_pair(size, rng);
    out.push_back(prepare_sample(img, mask, size, strf("synth_%05d", i)));
  }
  return out;
}

}  // namespace sac

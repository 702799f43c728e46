#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "invpt/pnm.hpp"
#include "invpt/rng.hpp"

namespace invpt::synth {

/// One procedural scene with dense labels for every task. Labels are
/// consistent by construction: boundary pixels are exactly the 4-neighbor
/// label transitions of the segmentation map, saliency is the union of
/// class-1 shapes, depth is a per-shape radial height field over a
/// background gradient.
struct Sample {
  int64_t height = 0, width = 0;
  uint64_t seed = 0;
  std::vector<float> image;      // [3, H, W], values in [0, 1]
  std::vector<int32_t> semseg;   // [H, W], 0 = background, shapes use 1..K
  std::vector<float> depth;      // [H, W], values in [0, 1]
  std::vector<int32_t> saliency; // [H, W], binary
  std::vector<int32_t> boundary; // [H, W], binary
};

namespace detail {

struct ShapeDef {
  bool ellipse = false;
  int32_t cls = 1;
  double cy = 0, cx = 0, ry = 1, rx = 1;
  double depth_peak = 1.0;
};

/// Class-coded base colors, deterministic in the class id.
inline void class_color(int32_t cls, float& r, float& g, float& b) {
  Rng rng(0x1234ABCDu * static_cast<uint64_t>(cls + 7));
  r = static_cast<float>(0.15 + 0.7 * rng.next_double());
  g = static_cast<float>(0.15 + 0.7 * rng.next_double());
  b = static_cast<float>(0.15 + 0.7 * rng.next_double());
}

}  // namespace detail

inline Sample generate_sample(uint64_t seed, int64_t h, int64_t w, int num_shapes, int num_classes) {
  if (h < 4 || w < 4) throw std::invalid_argument("synth: scene too small");
  if (num_classes < 2) throw std::invalid_argument("synth: need at least 2 shape classes");
  if (num_shapes < 0) throw std::invalid_argument("synth: negative shape count");

  Rng rng(seed);
  Sample s;
  s.height = h;
  s.width = w;
  s.seed = seed;
  s.image.assign(static_cast<size_t>(3 * h * w), 0.f);
  s.semseg.assign(static_cast<size_t>(h * w), 0);
  s.depth.assign(static_cast<size_t>(h * w), 0.f);
  s.saliency.assign(static_cast<size_t>(h * w), 0);
  s.boundary.assign(static_cast<size_t>(h * w), 0);

  // Background: soft vertical gradient in image and depth.
  for (int64_t y = 0; y < h; ++y) {
    const float t = static_cast<float>(y) / static_cast<float>(h - 1);
    for (int64_t x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y * w + x);
      s.image[p] = 0.10f + 0.10f * t;
      s.image[static_cast<size_t>(h * w) + p] = 0.12f + 0.08f * t;
      s.image[static_cast<size_t>(2 * h * w) + p] = 0.15f + 0.05f * t;
      s.depth[p] = 0.10f + 0.15f * t;
    }
  }

  std::vector<detail::ShapeDef> shapes;
  for (int i = 0; i < num_shapes; ++i) {
    detail::ShapeDef d;
    d.ellipse = rng.coin();
    d.cls = 1 + static_cast<int32_t>(rng.below(num_classes));
    d.cy = rng.uniform(0.15, 0.85) * static_cast<double>(h);
    d.cx = rng.uniform(0.15, 0.85) * static_cast<double>(w);
    d.ry = rng.uniform(0.08, 0.22) * static_cast<double>(h);
    d.rx = rng.uniform(0.08, 0.22) * static_cast<double>(w);
    d.depth_peak = rng.uniform(0.45, 1.0);
    shapes.push_back(d);
  }

  // Painter's order: later shapes occlude earlier ones.
  for (const auto& d : shapes) {
    float cr, cg, cb;
    detail::class_color(d.cls, cr, cg, cb);
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(d.cy - d.ry));
    const int64_t y1 = std::min<int64_t>(h - 1, static_cast<int64_t>(d.cy + d.ry));
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(d.cx - d.rx));
    const int64_t x1 = std::min<int64_t>(w - 1, static_cast<int64_t>(d.cx + d.rx));
    for (int64_t y = y0; y <= y1; ++y) {
      for (int64_t x = x0; x <= x1; ++x) {
        const double dy = (static_cast<double>(y) - d.cy) / d.ry;
        const double dx = (static_cast<double>(x) - d.cx) / d.rx;
        const double rho2 = d.ellipse ? dy * dy + dx * dx : std::max(std::abs(dy), std::abs(dx));
        const double rho = d.ellipse ? std::sqrt(rho2) : rho2;
        if (rho > 1.0) continue;
        const size_t p = static_cast<size_t>(y * w + x);
        s.semseg[p] = d.cls;
        s.depth[p] = static_cast<float>(d.depth_peak * (1.0 - 0.6 * rho));
        s.image[p] = cr;
        s.image[static_cast<size_t>(h * w) + p] = cg;
        s.image[static_cast<size_t>(2 * h * w) + p] = cb;
      }
    }
  }

  // Pixel noise on the image only; labels stay clean.
  for (size_t p = 0; p < s.image.size(); ++p) {
    s.image[p] = std::clamp(s.image[p] + static_cast<float>(rng.uniform(-0.03, 0.03)), 0.f, 1.f);
  }
  for (float& d : s.depth) d = std::clamp(d, 0.f, 1.f);

  // Saliency: shapes of the first class.
  for (size_t p = 0; p < s.semseg.size(); ++p) s.saliency[p] = s.semseg[p] == 1 ? 1 : 0;

  // Boundary: any 4-neighbor with a different segmentation label.
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const int32_t lab = s.semseg[static_cast<size_t>(y * w + x)];
      bool edge = false;
      if (y > 0 && s.semseg[static_cast<size_t>((y - 1) * w + x)] != lab) edge = true;
      if (!edge && y + 1 < h && s.semseg[static_cast<size_t>((y + 1) * w + x)] != lab) edge = true;
      if (!edge && x > 0 && s.semseg[static_cast<size_t>(y * w + x - 1)] != lab) edge = true;
      if (!edge && x + 1 < w && s.semseg[static_cast<size_t>(y * w + x + 1)] != lab) edge = true;
      s.boundary[static_cast<size_t>(y * w + x)] = edge ? 1 : 0;
    }
  }
  return s;
}

struct Dataset {
  std::vector<Sample> samples;
  std::vector<size_t> train_indices;
  std::vector<size_t> val_indices;

  const Sample& train(size_t i) const { return samples[train_indices[i % train_indices.size()]]; }
  const Sample& val(size_t i) const { return samples[val_indices[i % val_indices.size()]]; }
};

/// Deterministic dataset with an 80/20 split by index (every 5th sample is
/// validation). Each sample draws from its own forked stream, so the set is
/// stable under regeneration with the same seed.
inline Dataset make_dataset(uint64_t seed, int n, int64_t h, int64_t w, int num_shapes, int num_classes) {
  if (n < 2) throw std::invalid_argument("synth: dataset needs at least 2 samples");
  if (num_shapes == 0 && num_classes > 1)
    throw std::invalid_argument("synth: zero shapes cannot cover a multi-class label space");
  Rng base(seed);
  Dataset ds;
  for (int i = 0; i < n; ++i) {
    Rng stream = base.fork(static_cast<uint64_t>(i));
    ds.samples.push_back(generate_sample(stream.next_u64(), h, w, num_shapes, num_classes));
    if (i % 5 == 4) ds.val_indices.push_back(static_cast<size_t>(i));
    else ds.train_indices.push_back(static_cast<size_t>(i));
  }
  return ds;
}

/// Writes one sample's image and labels as <split>_<index>_<task>.p?m files.
/// Depth goes out as 16-bit PGM, everything else as 8-bit PGM/PPM.
inline void dump_sample(const std::string& dir, const std::string& split, size_t index, const Sample& s,
                        int num_classes) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string stem = dir + "/" + split + "_" + std::to_string(index) + "_";
  const int64_t h = s.height, w = s.width;

  std::vector<uint8_t> rgb(static_cast<size_t>(3 * h * w));
  for (int64_t p = 0; p < h * w; ++p) {
    for (int c = 0; c < 3; ++c) {
      rgb[static_cast<size_t>(3 * p + c)] =
          static_cast<uint8_t>(std::lround(255.0f * s.image[static_cast<size_t>(c * h * w + p)]));
    }
  }
  write_ppm(stem + "image.ppm", w, h, rgb);

  std::vector<uint8_t> gray(static_cast<size_t>(h * w));
  for (size_t p = 0; p < gray.size(); ++p)
    gray[p] = static_cast<uint8_t>(s.semseg[p] * 255 / std::max(1, num_classes));
  write_pgm8(stem + "semseg.pgm", w, h, gray);

  std::vector<uint16_t> depth16(static_cast<size_t>(h * w));
  for (size_t p = 0; p < depth16.size(); ++p)
    depth16[p] = static_cast<uint16_t>(std::lround(65535.0f * s.depth[p]));
  write_pgm16(stem + "depth.pgm", w, h, depth16);

  for (size_t p = 0; p < gray.size(); ++p) gray[p] = s.saliency[p] ? 255 : 0;
  write_pgm8(stem + "saliency.pgm", w, h, gray);
  for (size_t p = 0; p < gray.size(); ++p) gray[p] = s.boundary[p] ? 255 : 0;
  write_pgm8(stem + "boundary.pgm", w, h, gray);
}

}  // namespace invpt::synth

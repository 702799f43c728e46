#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "invpt/pnm.hpp"
#include "invpt/synthdata.hpp"

using namespace invpt;
using namespace invpt::synth;

TEST_CASE("same seed gives bit-identical samples") {
  Sample a = generate_sample(42, 64, 64, 5, 5);
  Sample b = generate_sample(42, 64, 64, 5, 5);
  CHECK(a.image == b.image);
  CHECK(a.semseg == b.semseg);
  CHECK(a.depth == b.depth);
  CHECK(a.saliency == b.saliency);
  CHECK(a.boundary == b.boundary);

  Sample c = generate_sample(43, 64, 64, 5, 5);
  CHECK(a.semseg != c.semseg);
}

TEST_CASE("zero shapes yield a background-only scene") {
  Sample s = generate_sample(1, 32, 32, 0, 5);
  for (auto v : s.semseg) CHECK(v == 0);
  for (auto v : s.boundary) CHECK(v == 0);
  for (auto v : s.saliency) CHECK(v == 0);
}

TEST_CASE("boundary equals an independent 4-neighbor transition scan") {
  Sample s = generate_sample(7, 48, 48, 6, 5);
  const int64_t h = s.height, w = s.width;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const int32_t lab = s.semseg[static_cast<size_t>(y * w + x)];
      bool expect = false;
      const int64_t dy[] = {-1, 1, 0, 0};
      const int64_t dx[] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int64_t ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        if (s.semseg[static_cast<size_t>(ny * w + nx)] != lab) expect = true;
      }
      CHECK(s.boundary[static_cast<size_t>(y * w + x)] == (expect ? 1 : 0));
    }
  }
}

TEST_CASE("label consistency invariants") {
  Sample s = generate_sample(3, 64, 64, 6, 5);
  for (auto v : s.depth) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
  for (auto v : s.image) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
  std::set<int32_t> classes(s.semseg.begin(), s.semseg.end());
  CHECK(classes.size() >= 2);  // background plus at least one shape class
  for (auto c : classes) {
    CHECK(c >= 0);
    CHECK(c <= 5);
  }
  // saliency is exactly the class-1 mask
  for (size_t i = 0; i < s.semseg.size(); ++i) CHECK(s.saliency[i] == (s.semseg[i] == 1 ? 1 : 0));
}

TEST_CASE("dataset split is deterministic, disjoint and 80/20") {
  Dataset a = make_dataset(11, 10, 32, 32, 4, 5);
  CHECK(a.train_indices.size() == 8);
  CHECK(a.val_indices.size() == 2);

  std::set<size_t> train(a.train_indices.begin(), a.train_indices.end());
  for (size_t v : a.val_indices) CHECK_FALSE(train.count(v));

  Dataset b = make_dataset(11, 10, 32, 32, 4, 5);
  CHECK(a.train_indices == b.train_indices);
  CHECK(a.val_indices == b.val_indices);
  for (size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i].semseg == b.samples[i].semseg);

  CHECK_THROWS_AS(make_dataset(11, 1, 32, 32, 4, 5), std::invalid_argument);
  CHECK_THROWS_AS(make_dataset(11, 10, 32, 32, 0, 5), std::invalid_argument);
}

TEST_CASE("pnm dump round-trips through the reader") {
  namespace fs = std::filesystem;
  const std::string dir = fs::temp_directory_path() / "invpt_pnm_test";
  fs::remove_all(dir);
  Sample s = generate_sample(9, 32, 32, 4, 5);
  dump_sample(dir, "train", 0, s, 6);

  PnmImage img = read_pnm(dir + "/train_0_image.ppm");
  CHECK(img.width == 32);
  CHECK(img.height == 32);
  CHECK(img.channels == 3);
  CHECK(img.maxval == 255);

  PnmImage depth = read_pnm(dir + "/train_0_depth.pgm");
  CHECK(depth.maxval == 65535);
  // 16-bit values decode to the quantized depth
  for (size_t i = 0; i < depth.pixels.size(); ++i) {
    const float back = static_cast<float>(depth.pixels[i]) / 65535.0f;
    CHECK(std::abs(back - s.depth[i]) < 1.0f / 65535.0f + 1e-6f);
  }

  PnmImage boundary = read_pnm(dir + "/train_0_boundary.pgm");
  for (size_t i = 0; i < boundary.pixels.size(); ++i)
    CHECK(boundary.pixels[i] == (s.boundary[i] ? 255 : 0));
  fs::remove_all(dir);
}

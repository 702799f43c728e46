#include <catch2/catch_amalgamated.hpp>

#include "invpt/encoder.hpp"
#include "invpt/prelim.hpp"
#include "invpt/verify.hpp"

using namespace invpt;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig cfg;
  cfg.patch_size = 16;
  cfg.embed_dim = 32;
  cfg.depth = 6;
  cfg.mlp_ratio = 2;
  cfg.tap_layers = {2, 4, 6};
  return cfg;
}

std::vector<TaskSpec> three_tasks() {
  TaskSpec semseg{"semseg", true, 5, 1.0, "miou", false, -1};
  TaskSpec depth{"depth", false, 1, 1.0, "rmse", true, -1};
  TaskSpec boundary{"boundary", true, 2, 1.0, "odsf", false, -1};
  return {semseg, depth, boundary};
}

}  // namespace

TEST_CASE("patch embed produces one token per patch") {
  ParamStore<float> store;
  Rng rng(0);
  ViTEncoder<float> enc(store, small_encoder(), 128, 128, 3, rng);
  CHECK(enc.h0() == 8);
  CHECK(enc.w0() == 8);
  Tensor<float> image = Tensor<float>::uniform({3, 128, 128}, rng, 0, 1);
  auto tokens = enc.patch_embed(image);
  CHECK(tokens.shape() == Shape{64, 32});
}

TEST_CASE("zero image with zero patch weights leaves the positional embedding") {
  ParamStore<float> store;
  Rng rng(0);
  ViTEncoder<float> enc(store, small_encoder(), 64, 64, 3, rng);
  auto wv = store.at("encoder.patch.weight").mutable_values();
  std::fill(wv.begin(), wv.end(), 0.f);
  auto bv = store.at("encoder.patch.bias").mutable_values();
  std::fill(bv.begin(), bv.end(), 0.f);
  auto tokens = enc.patch_embed(Tensor<float>::zeros({3, 64, 64}));
  auto pos = store.at("encoder.pos").values();
  REQUIRE(tokens.numel() == static_cast<int64_t>(pos.size()));
  for (int64_t i = 0; i < tokens.numel(); ++i) CHECK(tokens.values()[i] == pos[i]);
}

TEST_CASE("encoder forward is deterministic and shaped correctly") {
  ParamStore<float> store;
  Rng rng(7);
  ViTEncoder<float> enc(store, small_encoder(), 128, 128, 3, rng);
  Rng data_rng(3);
  Tensor<float> image = Tensor<float>::uniform({3, 128, 128}, data_rng, 0, 1);
  auto out1 = enc.forward(image);
  auto out2 = enc.forward(image);
  CHECK(out1.final_map.shape() == Shape{1, 32, 8, 8});
  REQUIRE(out1.taps.size() == 3);
  for (const auto& tap : out1.taps) CHECK(tap.shape() == Shape{64, 32});
  for (int64_t i = 0; i < out1.final_map.numel(); ++i)
    CHECK(out1.final_map.values()[i] == out2.final_map.values()[i]);
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg = small_encoder();
  cfg.depth = 0;
  CHECK_THROWS_AS(cfg.validate(128, 128), std::invalid_argument);

  cfg = small_encoder();
  CHECK_THROWS_AS(cfg.validate(100, 128), std::invalid_argument);  // divisibility

  cfg = small_encoder();
  cfg.tap_layers = {2, 2, 6};
  CHECK_THROWS_AS(cfg.validate(128, 128), std::invalid_argument);  // not increasing

  cfg = small_encoder();
  cfg.tap_layers = {2, 4, 7};
  CHECK_THROWS_AS(cfg.validate(128, 128), std::invalid_argument);  // beyond depth

  cfg = small_encoder();
  cfg.tap_layers.clear();
  CHECK(cfg.effective_taps() == std::vector<int64_t>{2, 4, 6});
}

TEST_CASE("tap alignment matches stage working resolutions") {
  ParamStore<float> store;
  Rng rng(5);
  ViTEncoder<float> enc(store, small_encoder(), 128, 128, 3, rng);
  Tensor<float> tap = Tensor<float>::uniform({64, 32}, rng, -1, 1);
  CHECK(enc.align_tap(tap, 0).shape() == Shape{1, 32, 8, 8});
  CHECK(enc.align_tap(tap, 1).shape() == Shape{1, 32, 16, 16});
  CHECK(enc.align_tap(tap, 2).shape() == Shape{1, 32, 32, 32});
  CHECK_THROWS_AS(enc.align_tap(tap, 3), ShapeError);
}

TEST_CASE("degenerate depth cannot host three taps") {
  ParamStore<double> store;
  Rng rng(9);
  EncoderConfig cfg = small_encoder();
  cfg.depth = 1;
  cfg.tap_layers = {1, 1, 1};
  CHECK_THROWS_AS(ViTEncoder<double>(store, cfg, 64, 64, 3, rng), std::invalid_argument);
}

TEST_CASE("prelim decoder per-task outputs and assembly") {
  ParamStore<float> store;
  Rng rng(11);
  auto tasks = three_tasks();
  PrelimDecoder<float> prelim(store, tasks, 32, 24, 16, rng);
  Tensor<float> enc_map = Tensor<float>::uniform({1, 32, 8, 8}, rng, -1, 1);
  auto out = prelim.forward(enc_map, /*training=*/true);

  REQUIRE(out.predictions.size() == 3);
  CHECK(out.predictions[0].shape() == Shape{1, 5, 8, 8});  // 5-class discrete head
  CHECK(out.predictions[1].shape() == Shape{1, 1, 8, 8});
  CHECK(out.predictions[2].shape() == Shape{1, 2, 8, 8});
  CHECK(out.task_features[0].shape() == Shape{1, 24, 8, 8});

  CHECK(out.combined.data.shape() == Shape{3 * 64, 16});
  CHECK(out.combined.tasks == 3);
}

TEST_CASE("distinct tasks use distinct parameters") {
  ParamStore<float> store;
  Rng rng(13);
  auto tasks = three_tasks();
  PrelimDecoder<float> prelim(store, tasks, 32, 24, 16, rng);
  Tensor<float> enc_map = Tensor<float>::uniform({1, 32, 8, 8}, rng, -1, 1);
  auto before = prelim.forward(enc_map, false);

  // Perturb task-0 weights; task-1 and task-2 outputs must not move.
  auto wv = store.at("prelim.semseg.block1.conv.weight").mutable_values();
  for (auto& v : wv) v += 0.5f;
  auto after = prelim.forward(enc_map, false);

  bool task0_changed = false;
  for (int64_t i = 0; i < before.predictions[0].numel(); ++i)
    task0_changed = task0_changed || before.predictions[0].values()[i] != after.predictions[0].values()[i];
  CHECK(task0_changed);
  for (size_t t = 1; t < 3; ++t) {
    for (int64_t i = 0; i < before.predictions[t].numel(); ++i)
      CHECK(before.predictions[t].values()[i] == after.predictions[t].values()[i]);
  }
}

TEST_CASE("combined sequence splits back into the projected task maps") {
  ParamStore<float> store;
  Rng rng(17);
  auto tasks = three_tasks();
  PrelimDecoder<float> prelim(store, tasks, 32, 24, 16, rng);
  Tensor<float> enc_map = Tensor<float>::uniform({1, 32, 8, 8}, rng, -1, 1);
  auto out = prelim.forward(enc_map, false);

  auto blocks = split(out.combined.data, 0, 3);
  for (const auto& blk : blocks) CHECK(blk.shape() == Shape{64, 16});
  auto rejoined = concat(blocks, 0);
  for (int64_t i = 0; i < rejoined.numel(); ++i)
    CHECK(rejoined.values()[i] == out.combined.data.values()[i]);
}

TEST_CASE("single-task assembly degenerates to one flattened map") {
  ParamStore<float> store;
  Rng rng(19);
  std::vector<TaskSpec> one = {TaskSpec{"semseg", true, 4, 1.0, "miou", false, -1}};
  PrelimDecoder<float> prelim(store, one, 32, 16, 8, rng);
  Tensor<float> enc_map = Tensor<float>::uniform({1, 32, 4, 4}, rng, -1, 1);
  auto out = prelim.forward(enc_map, false);
  CHECK(out.combined.data.shape() == Shape{16, 8});
  CHECK(out.combined.tasks == 1);
}

TEST_CASE("conv-bn-relu composite passes a finite-difference check") {
  ParamStore<double> store;
  Rng rng(29);
  auto block = ConvBnRelu<double>::create(store, "blk", 3, 4, rng);
  Tensor<double> x = Tensor<double>::uniform({2, 3, 4, 4}, rng, -1, 1);
  Tensor<double> probe = Tensor<double>::uniform({2 * 4 * 4 * 4}, rng, -1, 1);
  x.set_requires_grad(true);
  auto fwd = [&]() {
    auto y = block.forward(x, /*training=*/true);
    return sum(mul(reshape(y, {y.numel()}), probe));
  };
  std::vector<std::pair<std::string, Tensor<double>>> tensors;
  tensors.emplace_back("x", x);
  for (const auto& e : store.entries()) {
    if (e.trainable) tensors.emplace_back(e.name, e.tensor);
  }
  verify::GradcheckOptions opt;
  opt.seed = 0;
  auto r = verify::gradcheck(tensors, fwd, opt);
  INFO(r.worst);
  CHECK(r.pass);
}

TEST_CASE("conv-bn-relu composite zero path") {
  ParamStore<float> store;
  Rng rng(23);
  auto block = ConvBnRelu<float>::create(store, "blk", 4, 6, rng);
  auto wv = store.at("blk.conv.weight").mutable_values();
  std::fill(wv.begin(), wv.end(), 0.f);
  Tensor<float> x = Tensor<float>::uniform({2, 4, 5, 5}, rng, -1, 1);
  auto y = block.forward(x, /*training=*/true);
  CHECK(y.shape() == Shape{2, 6, 5, 5});  // pad-1 3x3 keeps extent
  for (auto v : y.values()) CHECK(v == 0.0f);
}

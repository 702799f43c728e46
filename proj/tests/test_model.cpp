#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "invpt/checkpoint.hpp"
#include "invpt/config.hpp"
#include "invpt/evaluate.hpp"
#include "invpt/model.hpp"
#include "invpt/verify.hpp"

using namespace invpt;

namespace {

ModelConfig toy_config() {
  ModelConfig cfg = model_config_from(resolve_config({}));
  // Shrink for test speed; geometry stays representative.
  cfg.image_size = 64;
  cfg.encoder.embed_dim = 32;
  cfg.encoder.depth = 3;
  cfg.encoder.tap_layers = {1, 2, 3};
  cfg.c0 = 32;
  cfg.cd = 32;
  return cfg;
}

synth::Sample toy_sample(uint64_t seed, int64_t size) { return synth::generate_sample(seed, size, size, 5, 5); }

}  // namespace

TEST_CASE("model forward produces preliminary and final maps at the right scales") {
  ModelConfig cfg = model_config_from(resolve_config({}));  // default 128x128, T=3
  InvPTModel<float> model(cfg);
  synth::Sample s = toy_sample(1, 128);
  auto out = model.forward(model.image_tensor(s), false);
  REQUIRE(out.prelim.size() == 3);
  REQUIRE(out.final.size() == 3);
  CHECK(out.prelim[0].shape() == Shape{1, 6, 8, 8});
  CHECK(out.final[0].shape() == Shape{1, 6, 128, 128});
  CHECK(out.prelim[1].shape() == Shape{1, 1, 8, 8});
  CHECK(out.final[1].shape() == Shape{1, 1, 128, 128});
  CHECK(out.final[2].shape() == Shape{1, 2, 128, 128});
}

TEST_CASE("single-task model runs") {
  ModelConfig cfg = toy_config();
  cfg.tasks = {TaskSpec{"semseg", true, 6, 1.0, "miou", false, -1}};
  InvPTModel<float> model(cfg);
  synth::Sample s = toy_sample(2, 64);
  auto out = model.forward(model.image_tensor(s), false);
  CHECK(out.final[0].shape() == Shape{1, 6, 64, 64});
}

TEST_CASE("same weights and input give identical outputs") {
  ModelConfig cfg = toy_config();
  InvPTModel<float> model(cfg);
  synth::Sample s = toy_sample(3, 64);
  auto a = model.forward(model.image_tensor(s), false);
  auto b = model.forward(model.image_tensor(s), false);
  for (size_t t = 0; t < a.final.size(); ++t) {
    for (int64_t i = 0; i < a.final[t].numel(); ++i)
      CHECK(a.final[t].values()[i] == b.final[t].values()[i]);
  }
}

TEST_CASE("two models with the same seed are bit-identical") {
  ModelConfig cfg = toy_config();
  InvPTModel<float> m1(cfg), m2(cfg);
  synth::Sample s = toy_sample(4, 64);
  auto a = m1.forward(m1.image_tensor(s), false);
  auto b = m2.forward(m2.image_tensor(s), false);
  for (int64_t i = 0; i < a.final[0].numel(); ++i) CHECK(a.final[0].values()[i] == b.final[0].values()[i]);
}

TEST_CASE("perfect continuous prediction has zero loss") {
  synth::Sample s = toy_sample(5, 64);
  TaskSpec depth{"depth", false, 1, 1.0, "rmse", true, -1};
  // The preliminary term is upsampled before comparison, so exactness needs a
  // field that survives bilinear interpolation: a constant one.
  std::fill(s.depth.begin(), s.depth.end(), 0.25f);
  ModelOutput<float> out;
  out.prelim.push_back(Tensor<float>::full({1, 1, 4, 4}, 0.25f));
  out.final.push_back(Tensor<float>::full({1, 1, 64, 64}, 0.25f));
  auto lb = multitask_loss(out, s, {depth}, 1.0);
  CHECK(lb.total.item() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("uniform logits give ln K cross entropy per pixel") {
  synth::Sample s = toy_sample(6, 64);
  TaskSpec semseg{"semseg", true, 6, 1.0, "miou", false, -1};
  ModelOutput<double> out;
  out.prelim.push_back(Tensor<double>::zeros({1, 6, 4, 4}));
  out.final.push_back(Tensor<double>::zeros({1, 6, 64, 64}));
  auto lb = multitask_loss(out, s, {semseg}, 1.0);
  // prelim and final terms both equal ln 6
  CHECK(lb.total.item() == Catch::Approx(2.0 * std::log(6.0)).epsilon(1e-9));

  ModelOutput<float> outf;
  outf.prelim.push_back(Tensor<float>::zeros({1, 6, 4, 4}));
  outf.final.push_back(Tensor<float>::zeros({1, 6, 64, 64}));
  auto lbf = multitask_loss(outf, s, {semseg}, 1.0);
  // f32 accumulation over 64x64 pixels rounds at the 1e-4 relative level
  CHECK(lbf.total.item() == Catch::Approx(2.0 * std::log(6.0)).epsilon(1e-4));
}

TEST_CASE("total loss equals the hand-summed per-task values") {
  synth::Sample s = toy_sample(7, 64);
  TaskSpec semseg{"semseg", true, 6, 2.0, "miou", false, -1};  // weight 2
  TaskSpec depth{"depth", false, 1, 0.5, "rmse", true, -1};    // weight 0.5
  ModelConfig cfg = toy_config();
  cfg.tasks = {semseg, depth};
  InvPTModel<float> model(cfg);
  auto out = model.forward(model.image_tensor(s), false);
  auto lb = multitask_loss(out, s, cfg.tasks, 1.0);
  double hand = 0;
  for (double v : lb.per_task) hand += v;
  CHECK(lb.total.item() == Catch::Approx(hand).epsilon(1e-5));
  REQUIRE(lb.per_task.size() == 2);
}

TEST_CASE("loss is invariant under task permutation") {
  synth::Sample s = toy_sample(8, 64);
  TaskSpec semseg{"semseg", true, 6, 1.0, "miou", false, -1};
  TaskSpec depth{"depth", false, 1, 1.0, "rmse", true, -1};
  TaskSpec boundary{"boundary", true, 2, 1.0, "odsf", false, -1};

  Rng rng(9);
  auto logits_s = Tensor<double>::uniform({1, 6, 64, 64}, rng, -1, 1);
  auto logits_sp = Tensor<double>::uniform({1, 6, 4, 4}, rng, -1, 1);
  auto pred_d = Tensor<double>::uniform({1, 1, 64, 64}, rng, 0, 1);
  auto pred_dp = Tensor<double>::uniform({1, 1, 4, 4}, rng, 0, 1);
  auto logits_b = Tensor<double>::uniform({1, 2, 64, 64}, rng, -1, 1);
  auto logits_bp = Tensor<double>::uniform({1, 2, 4, 4}, rng, -1, 1);

  ModelOutput<double> fwd_order;
  fwd_order.prelim = {logits_sp, pred_dp, logits_bp};
  fwd_order.final = {logits_s, pred_d, logits_b};
  auto l1 = multitask_loss(fwd_order, s, {semseg, depth, boundary}, 1.0);

  ModelOutput<double> rev_order;
  rev_order.prelim = {logits_bp, pred_dp, logits_sp};
  rev_order.final = {logits_b, pred_d, logits_s};
  auto l2 = multitask_loss(rev_order, s, {boundary, depth, semseg}, 1.0);

  CHECK(l1.total.item() == Catch::Approx(l2.total.item()).margin(1e-12));
}

TEST_CASE("preliminary predictions receive gradient") {
  ModelConfig cfg = toy_config();
  InvPTModel<float> model(cfg);
  synth::Sample s = toy_sample(10, 64);
  Tape<float> tape;
  {
    TapeScope<float> scope(tape);
    auto out = model.forward(model.image_tensor(s), true);
    auto lb = multitask_loss(out, s, cfg.tasks, 1.0);
    tape.backward(lb.total);
  }
  // The preliminary head weights of every task must see nonzero gradient.
  for (const auto& task : cfg.tasks) {
    auto g = model.params().at("prelim." + task.name + ".head.weight").grad_view();
    REQUIRE_FALSE(g.empty());
    double norm = 0;
    for (auto v : g) norm += std::abs(v);
    CHECK(norm > 0);
  }
}

TEST_CASE("trainer smoke: loss drops while memorizing one sample", "[slow]") {
  ModelConfig cfg = toy_config();
  cfg.lr = 1e-3;
  InvPTModel<float> model(cfg);
  Trainer<float> trainer(model, 50);
  synth::Sample s = toy_sample(11, 64);
  std::vector<synth::Sample> batch{s};
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    auto log = trainer.step(batch);
    if (i == 0) first = log.total;
    last = log.total;
  }
  CHECK(last < first);
  CHECK(trainer.iteration() == 50);
}

TEST_CASE("trainer lr schedule endpoints") {
  ModelConfig cfg = toy_config();
  InvPTModel<float> model(cfg);
  Trainer<float> trainer(model, 100);
  CHECK(trainer.lr_at(0) == Catch::Approx(cfg.lr));
  CHECK(trainer.lr_at(100) == 0.0);
  CHECK(trainer.lr_at(50) < cfg.lr);
}

TEST_CASE("zero gradients leave parameters unchanged through a manual adam step") {
  ModelConfig cfg = toy_config();
  InvPTModel<float> model(cfg);
  auto before = model.params().at("decoder.stage0.wq.weight").clone();
  Adam<float> adam(AdamConfig<float>{1e-3f, 0.9f, 0.999f, 1e-8f, 0.0f});
  model.params().zero_grads();
  adam.step(model.params(), 1e-3f);
  auto after = model.params().at("decoder.stage0.wq.weight").values();
  for (int64_t i = 0; i < before.numel(); ++i) CHECK(before.values()[i] == after[i]);
}

TEST_CASE("checkpoint round trip reproduces forward bit-exactly") {
  namespace fs = std::filesystem;
  const std::string dir = fs::temp_directory_path() / "invpt_ckpt_test";
  fs::remove_all(dir);

  ModelConfig cfg = toy_config();
  InvPTModel<float> model(cfg);
  synth::Sample s = toy_sample(12, 64);
  auto before = model.forward(model.image_tensor(s), false);

  CheckpointMeta meta;
  meta.iteration = 17;
  meta.config["note"] = "test";
  save_checkpoint(model.params(), meta, dir);

  InvPTModel<float> other(cfg);  // same seed, but perturb to prove load overwrites
  other.params().at("decoder.stage0.wq.weight").mutable_values()[0] += 1.f;
  CheckpointMeta loaded = load_checkpoint(other.params(), dir);
  CHECK(loaded.iteration == 17);
  CHECK(loaded.config.at("note") == "test");
  auto after = other.forward(other.image_tensor(s), false);
  for (size_t t = 0; t < before.final.size(); ++t) {
    for (int64_t i = 0; i < before.final[t].numel(); ++i)
      CHECK(before.final[t].values()[i] == after.final[t].values()[i]);
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint integrity and shape validation") {
  namespace fs = std::filesystem;
  const std::string dir = fs::temp_directory_path() / "invpt_ckpt_bad";
  fs::remove_all(dir);

  ModelConfig cfg = toy_config();
  InvPTModel<float> model(cfg);
  CheckpointMeta meta;
  save_checkpoint(model.params(), meta, dir);

  SECTION("truncated blob is rejected") {
    fs::resize_file(dir + "/weights.bin", 128);
    InvPTModel<float> other(cfg);
    CHECK_THROWS_AS(load_checkpoint(other.params(), dir), CheckpointError);
  }

  SECTION("shape mismatch is rejected") {
    ModelConfig big = cfg;
    big.c0 = 64;
    InvPTModel<float> other(big);
    CHECK_THROWS_AS(load_checkpoint(other.params(), dir), CheckpointError);
  }

  SECTION("foreign config with matching names and shapes loads") {
    ModelConfig same_shape = cfg;
    same_shape.lr = 0.5;       // optimizer setting differs
    same_shape.seed = 999;     // init differs, shapes match
    InvPTModel<float> other(same_shape);
    CHECK_NOTHROW(load_checkpoint(other.params(), dir));
  }
  fs::remove_all(dir);
}

TEST_CASE("fixed-seed training reproduces the loss trace bit-exactly", "[slow]") {
  auto run = [](uint64_t seed) {
    ModelConfig cfg = toy_config();
    cfg.seed = seed;
    InvPTModel<float> model(cfg);
    Trainer<float> trainer(model, 10);
    synth::Dataset data = synth::make_dataset(seed, 4, 64, 64, 4, 5);
    std::vector<double> losses;
    for (int i = 0; i < 10; ++i) {
      std::vector<synth::Sample> batch{data.train(static_cast<size_t>(2 * i)),
                                       data.train(static_cast<size_t>(2 * i + 1))};
      losses.push_back(trainer.step(batch).total);
    }
    return losses;
  };
  auto a = run(5);
  auto b = run(5);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("config parsing, overrides and unknown keys") {
  ConfigMap user;
  user["model.c0"] = "32";
  auto resolved = resolve_config(user);
  CHECK(resolved.at("model.c0") == "32");
  CHECK(resolved.at("model.stages") == "3");

  ConfigMap bad;
  bad["model.c00"] = "32";
  CHECK_THROWS_AS(resolve_config(bad), ConfigError);

  apply_override(user, "optimizer.lr=0.01");
  CHECK(user.at("optimizer.lr") == "0.01");
  CHECK_THROWS_AS(apply_override(user, "no-equals-sign"), ConfigError);

  auto cfg = model_config_from(resolve_config({}));
  CHECK(cfg.tasks.size() == 3);
  CHECK(cfg.tasks[0].channels == 6);  // 5 shape classes + background
  CHECK(cfg.h0() == 8);
}

TEST_CASE("model config validation failures") {
  ModelConfig cfg = toy_config();
  cfg.c0 = 66;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = toy_config();
  cfg.tasks.clear();
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = toy_config();
  cfg.tasks.push_back(cfg.tasks[0]);  // duplicate name
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = toy_config();
  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("evaluation produces one row per task and parallel eval matches serial") {
  ModelConfig cfg = toy_config();
  InvPTModel<float> model(cfg);
  synth::Dataset data = synth::make_dataset(3, 10, 64, 64, 5, 5);
  std::vector<const synth::Sample*> val;
  for (size_t i : data.val_indices) val.push_back(&data.samples[i]);
  REQUIRE(val.size() == 2);

  auto serial = evaluate_model(model, val, 1);
  auto parallel = evaluate_model(model, val, 2);
  auto parallel2 = evaluate_model(model, val, 2);
  REQUIRE(serial.rows.size() == cfg.tasks.size());
  for (size_t i = 0; i < serial.rows.size(); ++i) {
    CHECK(serial.rows[i].task == parallel.rows[i].task);
    // same worker count is deterministic
    CHECK(parallel.rows[i].value == parallel2.rows[i].value);
    // different shard groupings may differ by summation rounding only
    CHECK(serial.rows[i].value == Catch::Approx(parallel.rows[i].value).margin(1e-12));
  }
}

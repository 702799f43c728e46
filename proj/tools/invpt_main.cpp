// Command-line driver: training, evaluation, verification suites, a stage
// sweep benchmark, and synthetic data export. Exit codes: 0 success, 1
// usage/config error, 2 numeric failure, 3 verification failure.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invpt/checkpoint.hpp"
#include "invpt/config.hpp"
#include "invpt/evaluate.hpp"
#include "invpt/model.hpp"
#include "invpt/pnm.hpp"
#include "invpt/synthdata.hpp"
#include "invpt/verify.hpp"

namespace {

using namespace invpt;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string seed, iters, jobs;  // raw strings so "not given" is detectable
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value lines)");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "seed override");
  cmd->add_option("--iters", args.iters, "iteration count override");
  cmd->add_option("--jobs", args.jobs, "worker count for evaluation");
  cmd->add_option("--set", args.sets, "dotted-key override, key=value (repeatable)");
}

ConfigMap build_config(const CommonArgs& args) {
  ConfigMap user;
  if (!args.config_path.empty()) user = parse_config_file(args.config_path);
  for (const auto& kv : args.sets) apply_override(user, kv);
  if (!args.seed.empty()) user["seed"] = args.seed;
  if (!args.iters.empty()) user["iters"] = args.iters;
  if (!args.jobs.empty()) user["jobs"] = args.jobs;
  if (!args.out_dir.empty()) user["out"] = args.out_dir;
  return resolve_config(user);
}

std::string prepare_out_dir(const ConfigMap& cfg) {
  const std::string out = cfg.at("out");
  std::filesystem::create_directories(out);
  write_resolved_config(cfg, out + "/config.resolved");
  return out;
}

synth::Dataset dataset_from(const ConfigMap& cfg) {
  return synth::make_dataset(static_cast<uint64_t>(cfgdetail::to_int(cfg, "seed")),
                             static_cast<int>(cfgdetail::to_int(cfg, "data.count")),
                             cfgdetail::to_int(cfg, "image.size"), cfgdetail::to_int(cfg, "image.size"),
                             static_cast<int>(cfgdetail::to_int(cfg, "data.shapes")),
                             static_cast<int>(cfgdetail::to_int(cfg, "data.classes")));
}

void dump_predictions(InvPTModel<float>& model, const synth::Sample& sample, const std::string& out) {
  ModelOutput<float> pred = model.forward(model.image_tensor(sample), /*training=*/false);
  const auto& tasks = model.config().tasks;
  const int64_t h = sample.height, w = sample.width;
  for (size_t t = 0; t < tasks.size(); ++t) {
    const std::string stem = out + "/pred_" + tasks[t].name;
    if (tasks[t].name == "depth") {
      std::vector<float> v = channel_values(pred.final[t]);
      std::vector<uint16_t> px(v.size());
      for (size_t i = 0; i < v.size(); ++i)
        px[i] = static_cast<uint16_t>(std::lround(65535.0 * std::clamp(v[i], 0.f, 1.f)));
      write_pgm16(stem + ".pgm", w, h, px);
    } else if (tasks[t].channels == 2) {
      std::vector<float> prob = channel_probability(pred.final[t], 1);
      std::vector<uint8_t> px(prob.size());
      for (size_t i = 0; i < prob.size(); ++i) px[i] = static_cast<uint8_t>(std::lround(255.0f * prob[i]));
      write_pgm8(stem + ".pgm", w, h, px);
    } else {
      std::vector<int32_t> labels = argmax_channels(pred.final[t]);
      std::vector<uint8_t> px(labels.size());
      const int maxc = static_cast<int>(tasks[t].channels) - 1;
      for (size_t i = 0; i < labels.size(); ++i)
        px[i] = static_cast<uint8_t>(labels[i] * 255 / std::max(1, maxc));
      write_pgm8(stem + ".pgm", w, h, px);
    }
  }
}

int cmd_train(const ConfigMap& cfg, const std::string& resume) {
  const std::string out = prepare_out_dir(cfg);
  ModelConfig mc = model_config_from(cfg);
  const int64_t iters = cfgdetail::to_int(cfg, "iters");
  const int64_t ckpt_every = cfgdetail::to_int(cfg, "train.checkpoint_every");
  synth::Dataset data = dataset_from(cfg);

  InvPTModel<float> model(mc);
  Trainer<float> trainer(model, iters);

  std::string resume_dir = resume.empty() ? cfg.at("train.resume") : resume;
  if (!resume_dir.empty()) {
    CheckpointMeta meta = load_checkpoint(model.params(), resume_dir);
    trainer.set_iteration(meta.iteration);
    std::cout << "resumed from " << resume_dir << " at iteration " << meta.iteration << "\n";
  }

  std::ofstream log(out + "/train_log.csv", resume_dir.empty() ? std::ios::trunc : std::ios::app);
  if (trainer.iteration() == 0) {
    log << "iter,lr,loss_total";
    for (const auto& t : mc.tasks) log << ",loss_" << t.name;
    log << "\n";
  }

  CheckpointMeta meta;
  meta.config = cfg;
  meta.iteration = trainer.iteration();
  trainer.fit(data, iters, [&](const TrainStepLog& step) {
    log << step.iter << "," << step.lr << "," << step.total;
    for (double v : step.per_task) log << "," << v;
    log << "\n";
    if ((step.iter + 1) % 10 == 0 || step.iter == 0)
      std::cout << "iter " << step.iter << " lr " << step.lr << " loss " << step.total << "\n";
    meta.iteration = step.iter + 1;
    if (ckpt_every > 0 && meta.iteration % ckpt_every == 0)
      save_checkpoint(model.params(), meta, out + "/checkpoint");
  });
  save_checkpoint(model.params(), meta, out + "/checkpoint");
  dump_predictions(model, data.val_indices.empty() ? data.train(0) : data.val(0), out);
  std::cout << "checkpoint written to " << out << "/checkpoint\n";
  return 0;
}

int cmd_eval(const ConfigMap& cfg, const std::string& checkpoint_arg, const std::string& baseline_arg) {
  const std::string out = prepare_out_dir(cfg);
  const std::string ckpt = checkpoint_arg.empty() ? cfg.at("eval.checkpoint") : checkpoint_arg;
  const std::string baseline = baseline_arg.empty() ? cfg.at("eval.baseline") : baseline_arg;
  if (ckpt.empty()) throw ConfigError("eval: no checkpoint given (use --checkpoint)");

  ModelConfig mc = model_config_from(cfg);
  InvPTModel<float> model(mc);
  load_checkpoint(model.params(), ckpt);
  synth::Dataset data = dataset_from(cfg);

  std::vector<const synth::Sample*> val;
  for (size_t i : data.val_indices) val.push_back(&data.samples[i]);
  const int jobs = static_cast<int>(cfgdetail::to_int(cfg, "jobs"));
  metrics::MetricReport report = evaluate_model(model, val, jobs);

  for (const auto& row : report.rows)
    std::cout << row.task << "." << row.metric << " = " << row.value << "\n";

  double delta = 0;
  bool have_delta = false;
  if (!baseline.empty()) {
    metrics::MetricReport base = read_report_csv(baseline);
    delta = metrics::delta_m(report, base, mc.tasks);
    have_delta = true;
    std::cout << "delta_m = " << delta << "\n";
  }
  write_report_csv(report, out + "/report.csv", have_delta ? &delta : nullptr);
  return 0;
}

int cmd_verify(const ConfigMap& cfg, const std::string& suite) {
  const std::string out = prepare_out_dir(cfg);
  bool ok = true;
  const bool all = suite == "all";
  if (!all && suite != "gradcheck" && suite != "shapes" && suite != "oracle" && suite != "complexity")
    throw ConfigError("unknown verify suite: " + suite);

  if (all || suite == "shapes") {
    verify::ShapeReport r = verify::shape_suite(3, 8, 8, 64);
    std::ofstream csv(out + "/verify_shapes.csv");
    verify::write_shape_csv(r, csv);
    std::cout << "shapes: " << (r.pass ? "pass" : "FAIL") << " (" << r.rows.size() << " checks)\n";
    ok = ok && r.pass;
  }
  if (all || suite == "gradcheck") {
    auto t0 = std::chrono::steady_clock::now();
    verify::GradcheckResult pos = verify::decoder_stack_gradcheck(2, 2, 2, 8);
    verify::GradcheckResult neg = verify::gradcheck_corrupted_backward();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = pos.pass && !neg.pass;
    std::cout << "gradcheck: " << (pass ? "pass" : "FAIL") << " (max rel err " << pos.max_rel_err
              << ", negative control " << (neg.pass ? "MISSED" : "caught") << ", " << secs << "s)\n";
    std::ofstream csv(out + "/verify_gradcheck.csv");
    csv << "check,max_rel_err,pass\n";
    csv << "decoder_stack," << pos.max_rel_err << "," << (pos.pass ? 1 : 0) << "\n";
    csv << "corrupted_backward," << neg.max_rel_err << "," << (neg.pass ? 0 : 1) << "\n";
    ok = ok && pass;
  }
  if (all || suite == "oracle") {
    const double dev = verify::attention_oracle(2, 4, 4, 16, 0);
    const double neg = verify::attention_oracle(2, 4, 4, 16, 0, /*corrupt_pool_kernel=*/true);
    const bool pass = dev < 1e-5 && neg > 1e-5;
    std::cout << "oracle: " << (pass ? "pass" : "FAIL") << " (deviation " << dev << ", corrupted-kernel control "
              << neg << ")\n";
    std::ofstream csv(out + "/verify_oracle.csv");
    csv << "check,deviation,pass\n";
    csv << "engine_vs_loops," << dev << "," << (dev < 1e-5 ? 1 : 0) << "\n";
    csv << "wrong_kernel_control," << neg << "," << (neg > 1e-5 ? 1 : 0) << "\n";
    ok = ok && pass;
  }
  if (all || suite == "complexity") {
    verify::ComplexityReport r = verify::complexity_report(3, 8, 8, 64);
    std::ofstream csv(out + "/verify_complexity.csv");
    verify::write_complexity_csv(r, csv);
    const bool pass = r.cols_constant() && r.growth_law_holds();
    std::cout << "complexity: " << (pass ? "pass" : "FAIL") << " (A2 " << r.rows.back().actual_elements
              << " vs vanilla " << r.rows.back().vanilla_elements << ")\n";
    ok = ok && pass;
  }
  return ok ? 0 : 3;
}

int cmd_bench(const ConfigMap& cfg) {
  const std::string out = prepare_out_dir(cfg);
  ModelConfig base = model_config_from(cfg);
  synth::Dataset data = dataset_from(cfg);
  const synth::Sample& sample = data.samples[0];

  std::ofstream csv(out + "/bench.csv");
  csv << "stages,forward_ms,attn_elements,vanilla_elements,kv_cols\n";
  for (int stages = 1; stages <= base.stages; ++stages) {
    ModelConfig mc = base;
    mc.stages = stages;
    InvPTModel<float> model(mc);
    Tensor<float> image = model.image_tensor(sample);
    model.forward(image, false);  // warm up
    const int reps = 3;
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) model.forward(image, false);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / reps;
    verify::ComplexityReport cr =
        verify::complexity_report(static_cast<int64_t>(mc.tasks.size()), mc.h0(), mc.h0(), mc.c0, stages);
    int64_t attn = 0, vanilla = 0;
    for (const auto& row : cr.rows) {
      attn += row.actual_elements;
      vanilla += row.vanilla_elements;
    }
    csv << stages << "," << ms << "," << attn << "," << vanilla << "," << cr.rows[0].a_cols << "\n";
    std::cout << "stages " << stages << ": " << ms << " ms/forward, attention elements " << attn
              << " (vanilla counterfactual " << vanilla << ")\n";
  }
  return 0;
}

int cmd_data(const ConfigMap& cfg) {
  const std::string out = prepare_out_dir(cfg);
  synth::Dataset data = dataset_from(cfg);
  const int classes = static_cast<int>(cfgdetail::to_int(cfg, "data.classes"));
  for (size_t i = 0; i < data.samples.size(); ++i) {
    const bool is_val = (i % 5) == 4;
    synth::dump_sample(out, is_val ? "val" : "train", i, data.samples[i], classes + 1);
  }
  std::cout << "wrote " << data.samples.size() << " samples to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task dense prediction with a resolution-growing transformer decoder"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, verify_args, bench_args, data_args;
  std::string resume, checkpoint, baseline, data_count, suite = "all";

  CLI::App* train = app.add_subcommand("train", "train on synthetic scenes");
  add_common(train, train_args);
  train->add_option("--resume", resume, "checkpoint directory to resume from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory");
  eval->add_option("--baseline", baseline, "baseline report.csv for the multi-task performance score");

  CLI::App* verify_cmd = app.add_subcommand("verify", "run verification suites");
  add_common(verify_cmd, verify_args);
  verify_cmd->add_option("suite", suite, "all|gradcheck|shapes|oracle|complexity");

  CLI::App* bench = app.add_subcommand("bench", "time forward passes across stage counts");
  add_common(bench, bench_args);

  CLI::App* data = app.add_subcommand("data", "export the synthetic dataset as PGM/PPM");
  add_common(data, data_args);
  data->add_option("--count", data_count, "sample count (alias for data.count)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(build_config(train_args), resume);
    if (eval->parsed()) return cmd_eval(build_config(eval_args), checkpoint, baseline);
    if (verify_cmd->parsed()) return cmd_verify(build_config(verify_args), suite);
    if (bench->parsed()) return cmd_bench(build_config(bench_args));
    if (data->parsed()) {
      ConfigMap user;
      if (!data_args.config_path.empty()) user = parse_config_file(data_args.config_path);
      for (const auto& kv : data_args.sets) apply_override(user, kv);
      if (!data_args.seed.empty()) user["seed"] = data_args.seed;
      if (!data_args.out_dir.empty()) user["out"] = data_args.out_dir;
      if (!data_count.empty()) user["data.count"] = data_count;
      return cmd_data(resolve_config(user));
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

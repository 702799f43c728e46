#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "invpt/model.hpp"

namespace invpt::verify {

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradcheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  int samples_per_tensor = 32;
  uint64_t seed = 0;
};

struct GradcheckResult {
  bool pass = true;
  double max_rel_err = 0;
  std::string worst;  // "tensor[i]: analytic vs fd"

  void absorb(const std::string& name, int64_t coord, double analytic, double fd) {
    const double rel = std::abs(analytic - fd) / (std::abs(analytic) + 1e-8);
    if (rel > max_rel_err) {
      max_rel_err = rel;
      std::ostringstream os;
      os << name << "[" << coord << "]: analytic " << analytic << " vs central-diff " << fd;
      worst = os.str();
    }
  }
};

/// Central-difference check of d(loss)/d(tensor) for every listed tensor.
/// `forward` must rebuild the loss from the tensors' current values and be
/// free of randomness. Runs once under a tape for analytic gradients, then
/// perturbs sampled coordinates (all of them for small tensors).
template <typename Fn>
GradcheckResult gradcheck(const std::vector<std::pair<std::string, Tensor<double>>>& tensors, Fn&& forward,
                          const GradcheckOptions& opt = {}) {
  Tape<double> tape;
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : tensors) t.zero_grad();  // drop stale gradients
  {
    TapeScope<double> scope(tape);
    Tensor<double> loss = forward();
    tape.backward(loss);
  }
  for (const auto& [name, t] : tensors) {
    auto g = t.grad_view();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(static_cast<size_t>(t.numel()), 0.0);
  }

  GradcheckResult result;
  Rng rng(opt.seed);
  for (size_t ti = 0; ti < tensors.size(); ++ti) {
    const auto& [name, t] = tensors[ti];
    auto v = t.mutable_values();
    const int64_t n = t.numel();
    std::vector<int64_t> coords;
    if (n <= opt.samples_per_tensor) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int s = 0; s < opt.samples_per_tensor; ++s) coords.push_back(rng.below(n));
    }
    for (int64_t c : coords) {
      const double orig = v[static_cast<size_t>(c)];
      v[static_cast<size_t>(c)] = orig + opt.h;
      const double fplus = forward().item();
      v[static_cast<size_t>(c)] = orig - opt.h;
      const double fminus = forward().item();
      v[static_cast<size_t>(c)] = orig;
      const double fd = (fplus - fminus) / (2 * opt.h);
      result.absorb(name, c, analytic[ti][static_cast<size_t>(c)], fd);
    }
  }
  result.pass = result.max_rel_err < opt.tol;
  return result;
}

/// Same check but run against a deliberately wrong backward rule; the
/// harness uses it as a negative control on itself.
inline GradcheckResult gradcheck_corrupted_backward(const GradcheckOptions& opt = {}) {
  Rng rng(opt.seed + 17);
  Tensor<double> x = Tensor<double>::uniform({8}, rng, -1.0, 1.0);
  x.set_requires_grad(true);
  auto forward = [&x]() {
    Tensor<double> out(x.shape());
    auto ov = out.mutable_values();
    auto xv = x.values();
    for (int64_t i = 0; i < x.numel(); ++i) ov[i] = 2.0 * xv[i];
    // wrong adjoint on purpose: claims d(out)/d(x) = 3
    detail::record_op(out, {&x}, [x, out]() mutable {
      auto g = out.grad_view();
      if (g.empty()) return;
      auto xg = x.grad();
      for (size_t i = 0; i < g.size(); ++i) xg[i] += 3.0 * g[i];
    });
    return sum(out);
  };
  return gradcheck({{"x", x}}, forward, opt);
}

/// Gradient check of the full decoder stack (stage 0 + both UP-Transformer
/// stages + fusion) at f64: the loss is a fixed random projection of the
/// fused features, checked against every trainable decoder parameter plus the
/// input sequence and the encoder taps.
inline GradcheckResult decoder_stack_gradcheck(int64_t tasks, int64_t h0, int64_t w0, int64_t c0,
                                               const GradcheckOptions& opt = {}) {
  Rng rng(opt.seed + 99);
  ParamStore<double> store;
  std::vector<TaskSpec> specs;
  for (int64_t t = 0; t < tasks; ++t) {
    TaskSpec s;
    s.name = "task" + std::to_string(t);
    s.discrete = true;
    s.channels = 2;
    specs.push_back(s);
  }
  const int64_t enc_dim = 4;
  InvPTDecoder<double> dec(store, specs, h0, w0, c0, enc_dim, /*stages=*/3, /*amp=*/true,
                           {true, true, true}, rng);

  Tensor<double> fc = Tensor<double>::uniform({tasks * h0 * w0, c0}, rng, -0.5, 0.5);
  fc.set_requires_grad(true);
  std::vector<Tensor<double>> taps;
  for (int s = 0; s < 3; ++s) {
    const int64_t r = (int64_t(1) << s) * h0;
    Tensor<double> tap = Tensor<double>::uniform({1, enc_dim, r, r}, rng, -0.5, 0.5);
    tap.set_requires_grad(true);
    taps.push_back(tap);
  }
  const StagePlan& last = dec.plans().back();
  Tensor<double> probe =
      Tensor<double>::uniform({tasks * last.work_c * last.work_h * last.work_w}, rng, -1.0, 1.0);

  auto forward = [&]() {
    MultiTaskSeq<double> seq(fc, tasks, h0, w0, c0);
    Tensor<double> fused = dec.forward_features(seq, taps, /*training=*/true);
    return sum(mul(reshape(fused, {fused.numel()}), probe));
  };

  std::vector<std::pair<std::string, Tensor<double>>> tensors;
  tensors.emplace_back("input.fc", fc);
  for (size_t i = 0; i < taps.size(); ++i) tensors.emplace_back("input.tap" + std::to_string(i), taps[i]);
  for (const auto& e : store.entries()) {
    if (e.trainable) tensors.emplace_back(e.name, e.tensor);
  }
  return gradcheck(tensors, forward, opt);
}

/// End-to-end gradient check: encoder, preliminary decoders, pyramid decoder
/// and the multi-task loss against one synthetic sample, differentiated with
/// respect to every trainable parameter.
inline GradcheckResult model_gradcheck(int64_t tasks, int64_t h0, int64_t c0, const GradcheckOptions& opt = {});

// ---------------------------------------------------------------------------
// Shape suite
// ---------------------------------------------------------------------------

struct ShapeRow {
  int stage;
  std::string matrix;
  int64_t expect_rows, expect_cols;
  int64_t got_rows, got_cols;
  bool ok() const { return expect_rows == got_rows && expect_cols == got_cols; }
};

struct ShapeReport {
  std::vector<ShapeRow> rows;
  bool pass = true;

  void add(int stage, const std::string& name, int64_t er, int64_t ec, const Tensor<float>& got) {
    ShapeRow row{stage, name, er, ec, got.defined() ? got.extent(0) : -1, got.defined() ? got.extent(1) : -1};
    pass = pass && row.ok();
    rows.push_back(row);
  }
};

inline ModelConfig tiny_model_config(int64_t tasks, int64_t h0, int64_t w0, int64_t c0, uint64_t seed = 0,
                                     int stages = 3) {
  if (h0 != w0) throw std::invalid_argument("verify: square base resolution expected");
  ModelConfig cfg;
  cfg.encoder.patch_size = 4;
  cfg.image_size = h0 * cfg.encoder.patch_size;
  cfg.encoder.embed_dim = 16;
  cfg.encoder.depth = 3;
  cfg.encoder.mlp_ratio = 2;
  cfg.encoder.tap_layers = {1, 2, 3};
  cfg.c0 = c0;
  cfg.cd = 16;
  cfg.stages = stages;
  cfg.seed = seed;
  cfg.tasks.clear();
  const char* names[] = {"semseg", "depth", "boundary", "saliency"};
  for (int64_t t = 0; t < tasks; ++t) {
    TaskSpec spec;
    spec.name = names[t % 4];
    if (t >= 4) spec.name += std::to_string(t);
    if (spec.name == "depth") {
      spec.discrete = false;
      spec.channels = 1;
      spec.metric = "rmse";
      spec.lower_is_better = true;
    } else {
      spec.discrete = true;
      spec.channels = spec.name == "semseg" ? 5 : 2;
      spec.metric = spec.name == "semseg" ? "miou" : "odsf";
    }
    cfg.tasks.push_back(spec);
  }
  return cfg;
}

/// Builds a model at the given geometry, runs one forward and compares every
/// attention-side shape with the closed-form expectations: Q rows quadruple
/// per stage, K/V rows stay at T*H0*W0/4, A is q_rows x kv_rows and the
/// cross-stage message matches A exactly.
inline ShapeReport shape_suite(int64_t tasks, int64_t h0, int64_t w0, int64_t c0, uint64_t seed = 0) {
  ModelConfig cfg = tiny_model_config(tasks, h0, w0, c0, seed);
  InvPTModel<float> model(cfg);
  synth::Sample sample = synth::generate_sample(seed, cfg.image_size, cfg.image_size, 4, 4);
  std::vector<StageTrace<float>> trace;
  model.forward(model.image_tensor(sample), /*training=*/false, &trace);

  ShapeReport report;
  const int64_t kv_rows = tasks * h0 * w0 / 4;
  for (int s = 0; s < cfg.stages; ++s) {
    const int64_t q_rows = (s == 0) ? tasks * h0 * w0 / 4 : (int64_t(1) << (2 * (s - 1))) * tasks * h0 * w0;
    const int64_t width = (s == 0) ? c0 : c0 >> s;
    const auto& tr = trace[static_cast<size_t>(s)];
    report.add(s, "Q", q_rows, width, tr.q);
    report.add(s, "K", kv_rows, width, tr.k);
    report.add(s, "V", kv_rows, width, tr.v);
    report.add(s, "A", q_rows, kv_rows, tr.a_pre);
    if (s >= 1) report.add(s, "M", q_rows, kv_rows, tr.m);
    const int64_t f_rows = (int64_t(1) << (2 * s)) * tasks * h0 * w0;
    report.add(s, "F", f_rows, width, tr.f_next);
  }
  return report;
}

inline GradcheckResult model_gradcheck(int64_t tasks, int64_t h0, int64_t c0, const GradcheckOptions& opt) {
  ModelConfig cfg = tiny_model_config(tasks, h0, h0, c0, opt.seed);
  InvPTModel<double> model(cfg);
  synth::Sample sample = synth::generate_sample(opt.seed + 3, cfg.image_size, cfg.image_size, 3, 4);
  Tensor<double> image = model.image_tensor(sample);

  // The loss is scaled down so that gradients below the 1e-8 denominator
  // floor are judged on an absolute scale the central difference can actually
  // resolve: deep attention paths carry true gradients around 1e-7 whose
  // finite-difference estimate saturates at the f64 rounding noise of the
  // forward pass (~1e-10 here). A wrong adjoint still fails by many orders
  // of magnitude.
  auto forward = [&]() {
    ModelOutput<double> out = model.forward(image, /*training=*/true);
    return scale(multitask_loss(out, sample, cfg.tasks, cfg.prelim_loss_weight).total, 1e-3);
  };

  std::vector<std::pair<std::string, Tensor<double>>> tensors;
  for (const auto& e : model.params().entries()) {
    if (e.trainable) tensors.emplace_back(e.name, e.tensor);
  }
  return gradcheck(tensors, forward, opt);
}

// ---------------------------------------------------------------------------
// Attention oracle
// ---------------------------------------------------------------------------

namespace oracle {

/// Plain row-major matrix of doubles; the oracle works only on these and
/// explicit loops so it shares no code with the engine's op layer.
struct Mat {
  int64_t rows = 0, cols = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), 0.0) {}
  double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
};

inline double max_abs_diff(const Mat& a, std::span<const double> b) {
  double worst = 0;
  for (size_t i = 0; i < a.v.size(); ++i) worst = std::max(worst, std::abs(a.v[i] - b[i]));
  return worst;
}

/// Engine parameters for one stage, copied out of the store as raw doubles.
struct StageParams {
  std::vector<double> qconv_w, qconv_b;  // [C',C',3,3], [C']
  std::vector<double> wq, wk, wv;        // [C' x C']
  double alpha1 = 1.0, alpha2 = 1.0;
  bool has_alpha = false;
};

}  // namespace oracle

/// Recomputes the per-stage attention chain (query conv, pooled key/value,
/// projections, scores, cross-stage message, softmax, context) with explicit
/// index loops from each stage's post-LN sequence, and reports the largest
/// absolute deviation from the engine's tensors. `corrupt_pool_kernel`
/// shrinks the oracle's pooling window, a negative control that must disagree.
inline double attention_oracle(int64_t tasks, int64_t h0, int64_t w0, int64_t c0, uint64_t seed,
                               bool corrupt_pool_kernel = false) {
  ModelConfig cfg = tiny_model_config(tasks, h0, w0, c0, seed);
  InvPTModel<double> model(cfg);
  synth::Sample sample = synth::generate_sample(seed, cfg.image_size, cfg.image_size, 4, 4);
  std::vector<StageTrace<double>> trace;
  model.forward(model.image_tensor(sample), /*training=*/false, &trace);

  auto fetch = [&](const std::string& name) {
    std::vector<double> out;
    const Tensor<double>& t = model.params().at(name);
    out.assign(t.values().begin(), t.values().end());
    return out;
  };

  double worst = 0;
  oracle::Mat a_prev;  // oracle's own pre-softmax scores from the previous stage
  for (int s = 0; s < cfg.stages; ++s) {
    const StagePlan& plan = model.decoder().plans()[static_cast<size_t>(s)];
    const std::string base = "decoder.stage" + std::to_string(s);
    oracle::StageParams p;
    p.qconv_w = fetch(base + ".qconv.weight");
    p.qconv_b = fetch(base + ".qconv.bias");
    p.wq = fetch(base + ".wq.weight");
    p.wk = fetch(base + ".wk.weight");
    p.wv = fetch(base + ".wv.weight");
    if (s >= 1 && cfg.amp) {
      p.alpha1 = model.params().at(base + ".amp.alpha1").item();
      p.alpha2 = model.params().at(base + ".amp.alpha2").item();
      p.has_alpha = true;
    }

    const auto& tr = trace[static_cast<size_t>(s)];
    const int64_t wh = plan.work_h, ww = plan.work_w, wc = plan.work_c;
    auto fp = tr.f_prime.values();  // [T*wh*ww x wc], task-major rows

    // Per-task spatial view of the working sequence.
    auto fp_at = [&](int64_t t, int64_t ch, int64_t y, int64_t x) {
      return fp[static_cast<size_t>(((t * wh + y) * ww + x) * wc + ch)];
    };

    // Query path: 3x3 conv, stride 2, pad 1, then flatten task-major.
    const int64_t qh = wh / 2, qw = ww / 2;
    oracle::Mat q_feat(tasks * qh * qw, wc);
    for (int64_t t = 0; t < tasks; ++t) {
      for (int64_t o = 0; o < wc; ++o) {
        for (int64_t y = 0; y < qh; ++y) {
          for (int64_t x = 0; x < qw; ++x) {
            double acc = p.qconv_b[static_cast<size_t>(o)];
            for (int64_t ic = 0; ic < wc; ++ic) {
              for (int64_t ky = 0; ky < 3; ++ky) {
                const int64_t sy = 2 * y + ky - 1;
                if (sy < 0 || sy >= wh) continue;
                for (int64_t kx = 0; kx < 3; ++kx) {
                  const int64_t sx = 2 * x + kx - 1;
                  if (sx < 0 || sx >= ww) continue;
                  acc += fp_at(t, ic, sy, sx) * p.qconv_w[static_cast<size_t>(((o * wc + ic) * 3 + ky) * 3 + kx)];
                }
              }
            }
            q_feat.at((t * qh + y) * qw + x, o) = acc;
          }
        }
      }
    }

    // Key/value path: average pooling with kernel k_s (or a deliberately
    // wrong window for the negative control).
    const int64_t ks = plan.k_s;
    const int64_t kv_h = wh / ks, kv_w = ww / ks;
    const int64_t win = corrupt_pool_kernel ? std::max<int64_t>(1, ks - 1) : ks;
    oracle::Mat kv_feat(tasks * kv_h * kv_w, wc);
    for (int64_t t = 0; t < tasks; ++t) {
      for (int64_t ch = 0; ch < wc; ++ch) {
        for (int64_t y = 0; y < kv_h; ++y) {
          for (int64_t x = 0; x < kv_w; ++x) {
            double acc = 0;
            for (int64_t ky = 0; ky < win; ++ky) {
              for (int64_t kx = 0; kx < win; ++kx) acc += fp_at(t, ch, y * ks + ky, x * ks + kx);
            }
            kv_feat.at((t * kv_h + y) * kv_w + x, ch) = acc / static_cast<double>(win * win);
          }
        }
      }
    }

    // Linear projections, scores, message passing, softmax, context.
    auto project = [&](const oracle::Mat& feat, const std::vector<double>& w) {
      oracle::Mat out(feat.rows, wc);
      for (int64_t r = 0; r < feat.rows; ++r) {
        for (int64_t o = 0; o < wc; ++o) {
          double acc = 0;
          for (int64_t i = 0; i < wc; ++i) acc += feat.at(r, i) * w[static_cast<size_t>(i * wc + o)];
          out.at(r, o) = acc;
        }
      }
      return out;
    };
    oracle::Mat q = project(q_feat, p.wq);
    oracle::Mat k = project(kv_feat, p.wk);
    oracle::Mat v = project(kv_feat, p.wv);

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(wc));
    oracle::Mat a(q.rows, k.rows);
    for (int64_t r = 0; r < q.rows; ++r) {
      for (int64_t cidx = 0; cidx < k.rows; ++cidx) {
        double acc = 0;
        for (int64_t i = 0; i < wc; ++i) acc += q.at(r, i) * k.at(cidx, i);
        a.at(r, cidx) = acc * inv_sqrt;
      }
    }

    oracle::Mat a_pre = a;
    if (p.has_alpha && a_prev.rows > 0) {
      // Message: task-wise spatial upsample of the previous scores with
      // columns as channels. Source grid is (qh/2 x qw/2) per task.
      const int64_t sh = qh / 2, sw = qw / 2;
      oracle::Mat msg(a.rows, a.cols);
      for (int64_t t = 0; t < tasks; ++t) {
        for (int64_t col = 0; col < a.cols; ++col) {
          for (int64_t y = 0; y < qh; ++y) {
            // half-pixel-center 2x sampling with border clamp
            const double srcy = (y + 0.5) / 2.0 - 0.5;
            int64_t y0 = static_cast<int64_t>(std::floor(srcy));
            const double fy = srcy - std::floor(srcy);
            int64_t y1 = y0 + 1;
            y0 = std::clamp<int64_t>(y0, 0, sh - 1);
            y1 = std::clamp<int64_t>(y1, 0, sh - 1);
            for (int64_t x = 0; x < qw; ++x) {
              const double srcx = (x + 0.5) / 2.0 - 0.5;
              int64_t x0 = static_cast<int64_t>(std::floor(srcx));
              const double fx = srcx - std::floor(srcx);
              int64_t x1 = x0 + 1;
              x0 = std::clamp<int64_t>(x0, 0, sw - 1);
              x1 = std::clamp<int64_t>(x1, 0, sw - 1);
              const double v00 = a_prev.at((t * sh + y0) * sw + x0, col);
              const double v01 = a_prev.at((t * sh + y0) * sw + x1, col);
              const double v10 = a_prev.at((t * sh + y1) * sw + x0, col);
              const double v11 = a_prev.at((t * sh + y1) * sw + x1, col);
              msg.at((t * qh + y) * qw + x, col) =
                  (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            }
          }
        }
      }
      for (size_t i = 0; i < a_pre.v.size(); ++i) a_pre.v[i] = p.alpha1 * a.v[i] + p.alpha2 * msg.v[i];
      worst = std::max(worst, oracle::max_abs_diff(msg, tr.m.values()));
    }

    oracle::Mat a_soft(a_pre.rows, a_pre.cols);
    for (int64_t r = 0; r < a_pre.rows; ++r) {
      double mx = a_pre.at(r, 0);
      for (int64_t i = 1; i < a_pre.cols; ++i) mx = std::max(mx, a_pre.at(r, i));
      double denom = 0;
      for (int64_t i = 0; i < a_pre.cols; ++i) {
        a_soft.at(r, i) = std::exp(a_pre.at(r, i) - mx);
        denom += a_soft.at(r, i);
      }
      for (int64_t i = 0; i < a_pre.cols; ++i) a_soft.at(r, i) /= denom;
    }

    oracle::Mat ctx(a_soft.rows, wc);
    for (int64_t r = 0; r < a_soft.rows; ++r) {
      for (int64_t o = 0; o < wc; ++o) {
        double acc = 0;
        for (int64_t i = 0; i < a_soft.cols; ++i) acc += a_soft.at(r, i) * v.at(i, o);
        ctx.at(r, o) = acc;
      }
    }

    worst = std::max(worst, oracle::max_abs_diff(q, tr.q.values()));
    worst = std::max(worst, oracle::max_abs_diff(k, tr.k.values()));
    worst = std::max(worst, oracle::max_abs_diff(v, tr.v.values()));
    worst = std::max(worst, oracle::max_abs_diff(a_pre, tr.a_pre.values()));
    worst = std::max(worst, oracle::max_abs_diff(a_soft, tr.a_soft.values()));
    worst = std::max(worst, oracle::max_abs_diff(ctx, tr.context.values()));

    a_prev = a_pre;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Complexity accounting
// ---------------------------------------------------------------------------

struct ComplexityRow {
  int stage;
  int64_t a_rows, a_cols;
  int64_t actual_elements;   // rows * cols
  int64_t vanilla_elements;  // rows^2, the unpooled counterfactual
  int64_t peak_activation;   // elements of the working sequence F'_s
};

struct ComplexityReport {
  std::vector<ComplexityRow> rows;

  bool cols_constant() const {
    for (const auto& r : rows) {
      if (r.a_cols != rows.front().a_cols) return false;
    }
    return true;
  }

  /// Actual growth is 4x per stage; the dense counterfactual grows 16x.
  bool growth_law_holds() const {
    for (size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].actual_elements != 4 * rows[i - 1].actual_elements) return false;
      if (rows[i].vanilla_elements != 16 * rows[i - 1].vanilla_elements) return false;
    }
    return true;
  }
};

/// Closed-form counts only; never allocates the dense counterfactual.
inline ComplexityReport complexity_report(int64_t tasks, int64_t h0, int64_t w0, int64_t c0, int stages = 3) {
  auto plans = make_stage_plans(tasks, h0, w0, c0, stages);
  ComplexityReport report;
  for (const auto& p : plans) {
    ComplexityRow row;
    row.stage = p.stage;
    row.a_rows = p.q_rows;
    row.a_cols = p.kv_rows;
    row.actual_elements = p.q_rows * p.kv_rows;
    row.vanilla_elements = p.q_rows * p.q_rows;
    row.peak_activation = tasks * p.work_h * p.work_w * p.work_c;
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

inline void write_shape_csv(const ShapeReport& r, std::ostream& os) {
  os << "stage,matrix,expect_rows,expect_cols,got_rows,got_cols,pass\n";
  for (const auto& row : r.rows) {
    os << row.stage << "," << row.matrix << "," << row.expect_rows << "," << row.expect_cols << ","
       << row.got_rows << "," << row.got_cols << "," << (row.ok() ? 1 : 0) << "\n";
  }
}

inline void write_complexity_csv(const ComplexityReport& r, std::ostream& os) {
  os << "stage,a_rows,a_cols,actual_elements,vanilla_elements,peak_activation\n";
  for (const auto& row : r.rows) {
    os << row.stage << "," << row.a_rows << "," << row.a_cols << "," << row.actual_elements << ","
       << row.vanilla_elements << "," << row.peak_activation << "\n";
  }
}

}  // namespace invpt::verify

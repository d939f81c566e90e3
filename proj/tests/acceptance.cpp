// Acceptance run: one PASS/FAIL line per criterion. Pass criterion names
// (AC1 .. AC9) to run a subset.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avu/attention.hpp"
#include "avu/bundle.hpp"
#include "avu/config.hpp"
#include "avu/errors.hpp"
#include "avu/gradsuite.hpp"
#include "avu/metrics.hpp"
#include "avu/synth.hpp"
#include "avu/tpgl.hpp"
#include "avu/tpm.hpp"
#include "avu/trainer.hpp"
#include "avu/vocab.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace avu;

namespace {

constexpr double kSimplexTol = 1e-9;
constexpr double kPermTol = 1e-12;
constexpr double kWindowTol = 1e-9;
constexpr double kMetricTol = 1e-12;
constexpr double kGradSeconds = 120.0;
constexpr double kLearnSeconds = 15.0 * 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double cpu_seconds(std::clock_t since) {
  return static_cast<double>(std::clock() - since) / CLOCKS_PER_SEC;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome gradient_suite_seeds() {
  const std::clock_t start = std::clock();
  std::map<std::string, std::size_t> failures;
  double worst_abs = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& r : gradient_suite(seed)) {
      if (!r.passed) ++failures[r.module];
      worst_abs = std::max(worst_abs, r.compare.max_abs);
    }
  }
  const double secs = cpu_seconds(start);
  std::ostringstream d;
  d << "20 seeds x " << gradient_suite_modules().size() << " modules, cpu " << fmt("%.1f", secs)
    << "s, max abs err " << fmt("%.2e", worst_abs);
  for (const auto& [m, n] : failures) d << ", " << m << " failed " << n << "x";
  return {failures.empty() && secs <= kGradSeconds, d.str()};
}

bool on_simplex(std::span<const double> w, std::size_t rows, std::size_t cols, double* worst) {
  bool ok = true;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = w[r * cols + c];
      ok = ok && v >= 0.0;
      s += v;
    }
    *worst = std::max(*worst, std::abs(s - 1.0));
    ok = ok && std::abs(s - 1.0) <= kSimplexTol;
  }
  return ok;
}

Outcome attention_invariants() {
  const std::size_t c = 6;
  std::size_t configs = 0, violations = 0;
  double worst_sum = 0.0, worst_perm = 0.0;
  for (std::size_t t = 1; t <= 4; ++t) {
    for (std::size_t m = 1; m <= 4; ++m) {
      for (std::size_t heads : {1u, 2u}) {
        ++configs;
        Rng rng(1000 * t + 10 * m + heads);
        ParamStore store;
        const AttentionSite site = make_attention_site(store, rng, "site", c, heads, all_tasks());
        const Tensor q = randn(rng, {t, c});
        std::vector<double> raw(m * c);
        for (auto& v : raw) v = rng.normal();
        const Tensor ctx = Tensor::from({m, c}, raw);
        const AttendResult res = attend(site, q, ctx);
        if (!on_simplex(res.weights.data(), t, m, &worst_sum)) ++violations;

        // Convex hull of the projected context rows.
        const Tensor v = site.value(ctx);
        for (std::size_t r = 0; r < t; ++r)
          for (std::size_t j = 0; j < c; ++j) {
            double lo = INFINITY, hi = -INFINITY;
            for (std::size_t i = 0; i < m; ++i) {
              lo = std::min(lo, v.at({i, j}));
              hi = std::max(hi, v.at({i, j}));
            }
            const double x = res.out.at({r, j});
            const double slack = 1e-12 * (1.0 + std::abs(lo) + std::abs(hi));
            if (x < lo - slack || x > hi + slack) ++violations;
          }

        // Every row ordering of the context.
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        do {
          std::vector<double> perm(m * c);
          for (std::size_t i = 0; i < m; ++i)
            std::copy_n(raw.begin() + order[i] * c, c, perm.begin() + i * c);
          const AttendResult pr = attend(site, q, Tensor::from({m, c}, perm));
          for (std::size_t i = 0; i < res.out.numel(); ++i) {
            const double d = std::abs(pr.out.data()[i] - res.out.data()[i]);
            worst_perm = std::max(worst_perm, d);
            if (d > kPermTol) ++violations;
          }
        } while (std::next_permutation(order.begin(), order.end()));

        // Excluded rows carry exactly zero weight.
        if (m > 1) {
          std::vector<double> mask(m, 0.0);
          for (std::size_t i = 1; i < m; i += 2) mask[i] = -INFINITY;
          const Tensor mk = Tensor::from({1, m}, mask);
          const AttendResult masked = attend(site, q, ctx, &mk);
          if (!on_simplex(masked.weights.data(), t, m, &worst_sum)) ++violations;
          for (std::size_t r = 0; r < t; ++r)
            for (std::size_t i = 1; i < m; i += 2)
              if (masked.weights.at({r, i}) != 0.0) ++violations;
        }

        // Prompt weights over the temporal rows and per-segment slots.
        const PromptWeights pw = prompt_weights(randn(rng, {1, c}), randn(rng, {2 * t, c}),
                                                randn(rng, {t, m + 1, c}), c);
        if (!on_simplex(pw.temporal.data(), 1, 2 * t, &worst_sum)) ++violations;
        if (!on_simplex(pw.spatial.data(), t, m + 1, &worst_sum)) ++violations;
      }
    }
  }
  std::ostringstream d;
  d << configs << " configs (T,M <= 4, 1-2 heads), max |sum-1| " << fmt("%.1e", worst_sum)
    << ", max perm diff " << fmt("%.1e", worst_perm) << ", violations " << violations;
  return {violations == 0, d.str()};
}

Outcome windowed_equivalence() {
  const std::size_t c = 8;
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    ParamStore store;
    TPMConfig tc;
    tc.dim = c;
    tc.max_window = 2;
    const TPMParams params = make_tpm_params(store, rng, tc, all_tasks());
    const HanSites& sites = params.stages.front();
    for (std::size_t t = 1; t <= 12; ++t) {
      const Tensor a = randn(rng, {t, c});
      const Tensor v = randn(rng, {t, c});
      const auto dense = han_scale_block(a, v, 0, sites);
      for (std::size_t s : {2 * t, 2 * t + 2, 4 * t}) {
        ++cases;
        const auto win = han_scale_block(a, v, s, sites);
        for (std::size_t i = 0; i < dense.first.numel(); ++i) {
          worst = std::max(worst, std::abs(win.first.data()[i] - dense.first.data()[i]));
          worst = std::max(worst, std::abs(win.second.data()[i] - dense.second.data()[i]));
        }
      }
    }
  }
  return {worst <= kWindowTol,
          std::to_string(cases) + " cases over 10 seeds, max abs diff " + fmt("%.1e", worst)};
}

RunConfig small_run() {
  RunConfig rc;
  rc.scene.audio_dim = 16;
  rc.scene.visual_dim = 16;
  rc.model.dim = 16;
  rc.model.ffn_dim = 32;
  rc.model.max_window = 4;
  rc.model.mask_channels = {4, 4};
  rc.train.batch = 2;
  rc.train.lr = 1e-3;
  rc.sync();
  return rc;
}

TaskPools make_pools(const SceneConfig& scene, std::size_t n, std::uint64_t base) {
  TaskPools pools;
  for (Task t : kAllTasks) pools[task_index(t)] = synth_generate(scene, n, t, base + task_index(t));
  return pools;
}

Outcome loss_masking() {
  RunConfig rc = small_run();
  rc.train.iterations = 100;
  const TaskPools pools = make_pools(rc.scene, 4, 300);
  Model model(rc.model);
  std::size_t steps = 0, checked = 0, nonzero = 0;
  std::array<std::size_t, kNumTasks> per_task{};
  train(model, pools, rc.train, std::nullopt, [&](std::size_t, Task task, const Model& m) {
    ++steps;
    ++per_task[task_index(task)];
    for (const auto& e : m.params().entries()) {
      if (e.users.test(task_index(task))) continue;
      ++checked;
      for (double g : e.tensor.grad()) nonzero += g != 0.0 ? 1 : 0;
    }
  });
  std::ostringstream d;
  d << steps << " steps (";
  for (Task t : kAllTasks) d << task_name(t) << " " << per_task[task_index(t)] << (t == Task::kAVQA ? "" : ", ");
  d << "), " << checked << " exclusive tensors checked, " << nonzero << " nonzero grads";
  return {steps == 100 && checked > 0 && nonzero == 0, d.str()};
}

std::vector<std::uint8_t> random_mask(Rng& rng, std::size_t n) {
  const double density = rng.uniform();
  std::vector<std::uint8_t> m(n);
  for (auto& v : m) v = rng.bernoulli(density) ? 1 : 0;
  return m;
}

Outcome metric_oracles() {
  Rng rng(5);
  double worst = 0.0;
  std::vector<double> ious, oracle_ious;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t h = 1 + rng.index(64), w = 1 + rng.index(64);
    auto p = random_mask(rng, h * w), t = random_mask(rng, h * w);
    if (i == 0) std::fill(p.begin(), p.end(), 0), std::fill(t.begin(), t.end(), 0);
    if (i == 1) std::fill(p.begin(), p.end(), 1);
    const double iou = mask_iou(p, t);
    ious.push_back(iou);
    oracle_ious.push_back(oracle::iou(p, t));
    worst = std::max(worst, std::abs(iou - oracle_ious.back()));
    worst = std::max(worst, std::abs(mask_fscore(p, t) - oracle::fscore(p, t)));
  }
  double sum = 0.0;
  for (double v : oracle_ious) sum += v;
  worst = std::max(worst, std::abs(mean(ious) - sum / static_cast<double>(oracle_ious.size())));
  worst = std::max(worst, std::abs(ciou_at(ious, 0.5) - oracle::ciou(oracle_ious, 0.5)));
  worst = std::max(worst, std::abs(ciou_auc(ious) - oracle::auc(oracle_ious)));
  return {worst <= kMetricTol, "100 masks up to 64x64, max diff " + fmt("%.1e", worst)};
}

Outcome token_grammar() {
  RunConfig rc = small_run();
  std::array<std::vector<FeatureBundle>, kNumTasks> inputs;
  for (Task t : kAllTasks) inputs[task_index(t)] = synth_generate(rc.scene, 8, t, 400 + task_index(t));
  const double scales[] = {1e-2, 1.0, 10.0, 100.0};
  Rng pick(6);
  std::size_t bad_states = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    ModelConfig mc = rc.model;
    mc.seed = 1000 + i;
    Model model(mc);
    const double scale = scales[i % 4];
    for (const auto& e : model.params().entries()) {
      Tensor w = e.tensor;
      for (double& v : w.mutable_data()) v = v * scale + pick.normal(0.0, 0.01 * scale);
    }
    const Task task = kAllTasks[i % kNumTasks];
    const auto& pool = inputs[task_index(task)];
    const FeatureBundle& b = pool[pick.index(pool.size())];
    try {
      const Prediction pred = model.predict(b);
      decode_tokens(pred.program, model.vocab(), mc.segments);
      const TokenProgram back = program_from_text(program_to_text(pred.program, model.vocab()),
                                                  model.vocab());
      if (back.tokens != pred.program.tokens) ++bad_states;
    } catch (const Error&) {
      ++bad_states;
    }
  }

  const std::size_t t = 10, k = 6, m = 16, answers = 8;
  const TokenVocab vocab(k, m, answers);
  Rng rng(7);
  std::size_t bad_round_trips = 0;
  for (Task task : kAllTasks) {
    for (std::size_t i = 0; i < 1000; ++i) {
      const LabelBlock lb = fixtures::random_labels(task, rng, t, k, m, answers);
      try {
        const TokenProgram prog = encode_labels(lb, task, vocab, t);
        const LabelBlock back = decode_tokens(prog, vocab, t);
        if (!fixtures::same_payload(lb, back)) ++bad_round_trips;
      } catch (const Error&) {
        ++bad_round_trips;
      }
    }
  }
  std::ostringstream d;
  d << "1000 model states: " << bad_states << " unparseable; 5x1000 label blocks: "
    << bad_round_trips << " round-trip mismatches";
  return {bad_states == 0 && bad_round_trips == 0, d.str()};
}

RunConfig learnability_run() {
  RunConfig rc;
  rc.scene.audio_dim = 64;
  rc.scene.visual_dim = 64;
  rc.train.lr = 1e-3;
  rc.train.iterations = 2000;
  rc.sync();
  return rc;
}

Outcome synthetic_learnability() {
  const RunConfig rc = learnability_run();
  TaskPools train_pools, eval_pools;
  std::vector<LatentScene> ssl_scenes;
  for (Task t : kAllTasks) {
    const std::size_t i = task_index(t);
    train_pools[i] = synth_generate(rc.scene, rc.train_per_task, t, rc.data_seed * 100 + i);
    for (auto& s : synth_samples(rc.scene, rc.eval_per_task, t, rc.data_seed * 100 + 50 + i)) {
      if (t == Task::kSSL) ssl_scenes.push_back(s.scene);
      eval_pools[i].push_back(std::move(s.bundle));
    }
  }
  const std::clock_t start = std::clock();
  Model model(rc.model);
  train(model, train_pools, rc.train);
  const MetricReport rep = evaluate(model, eval_pools, &ssl_scenes);
  const double secs = cpu_seconds(start);

  const std::pair<const char*, double> targets[] = {
      {"ave.accuracy", 0.80}, {"avvp.event_f1", 0.60}, {"ssl.ciou", 0.50},
      {"avs.miou", 0.50},     {"avqa.accuracy", 0.70}};
  bool pass = secs <= kLearnSeconds;
  std::ostringstream d;
  d << rc.train.iterations << " iters, cpu " << fmt("%.0f", secs) << "s";
  for (const auto& [key, floor] : targets) {
    const double v = rep.values.at(key);
    pass = pass && v >= floor;
    d << ", " << key << " " << fmt("%.3f", v) << (v >= floor ? "" : " (<") << (v >= floor ? "" : fmt("%.2f)", floor));
  }
  return {pass, d.str()};
}

Outcome directional_ablation() {
  RunConfig rc = learnability_run();
  rc.train.iterations = 600;
  rc.train.mix = {0, 0, 0, 0, 1};
  const std::size_t qa = task_index(Task::kAVQA);
  TaskPools train_pools, eval_pools;
  train_pools[qa] = synth_generate(rc.scene, rc.train_per_task, Task::kAVQA, 700);
  eval_pools[qa] = synth_generate(rc.scene, rc.eval_per_task, Task::kAVQA, 701);

  const auto accuracy = [&](bool tpm, bool spm, bool tpgl) {
    ModelConfig mc = rc.model;
    mc.use_tpm = tpm;
    mc.use_spm = spm;
    mc.use_tpgl = tpgl;
    Model model(mc);
    train(model, train_pools, rc.train);
    return evaluate(model, eval_pools).values.at("avqa.accuracy");
  };
  const double all_on = accuracy(true, true, true);
  const double all_off = accuracy(false, false, false);
  const double tpgl_off = accuracy(true, true, false);
  std::ostringstream d;
  d << "AVQA acc all-on " << fmt("%.3f", all_on) << " vs all-off " << fmt("%.3f", all_off)
    << " (margin " << fmt("%+.3f", all_on - all_off) << "); TPGL-off " << fmt("%.3f", tpgl_off)
    << " (margin " << fmt("%+.3f", all_on - tpgl_off) << ")";
  return {all_on >= all_off && all_on >= tpgl_off, d.str()};
}

Outcome determinism_and_format() {
  RunConfig rc = small_run();
  rc.train.iterations = 40;
  const TaskPools pools = make_pools(rc.scene, 4, 900);
  Model a(rc.model), b(rc.model);
  const TrainResult ra = train(a, pools, rc.train);
  const TrainResult rb = train(b, pools, rc.train);
  std::size_t curve_diffs = ra.curve.size() == rb.curve.size() ? 0 : 1;
  for (std::size_t i = 0; i < std::min(ra.curve.size(), rb.curve.size()); ++i)
    if (ra.curve[i].loss != rb.curve[i].loss || ra.curve[i].task != rb.curve[i].task) ++curve_diffs;

  SceneConfig full;
  std::size_t bundles = 0, byte_diffs = 0;
  for (Task t : kAllTasks) {
    for (FeatureBundle bundle : synth_generate(full, 3, t, 950 + task_index(t))) {
      ++bundles;
      const auto bytes = encode_bundle(bundle);
      if (encode_bundle(decode_bundle(bytes)) != bytes) ++byte_diffs;
      bundle.labels = LabelBlock{};
      bundle.labels.labeled = false;
      const auto unlabeled = encode_bundle(bundle);
      if (encode_bundle(decode_bundle(unlabeled)) != unlabeled) ++byte_diffs;
    }
  }
  std::ostringstream d;
  d << "2 runs x " << ra.curve.size() << " steps: " << curve_diffs << " differing losses; "
    << bundles << " bundles (+ unlabeled): " << byte_diffs << " byte mismatches";
  return {curve_diffs == 0 && byte_diffs == 0, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"AC1", gradient_suite_seeds},   {"AC2", attention_invariants},
      {"AC3", windowed_equivalence},   {"AC4", loss_masking},
      {"AC5", metric_oracles},         {"AC6", token_grammar},
      {"AC7", synthetic_learnability}, {"AC8", directional_ablation},
      {"AC9", determinism_and_format}};
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}

// avu: generate synthetic data, train, evaluate, check gradients, run
// inference and inspect bundles.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avu/bundle.hpp"
#include "avu/config.hpp"
#include "avu/errors.hpp"
#include "avu/exports.hpp"
#include "avu/gradsuite.hpp"
#include "avu/parallel.hpp"
#include "avu/prompts.hpp"
#include "avu/synth.hpp"
#include "avu/trainer.hpp"
#include "avu/vocab.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace avu;

namespace {

constexpr const char* kScenesFile = "scenes.json";

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

RunConfig resolve_config(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (const char* env = std::getenv("AVU_SEED")) {
    try {
      std::size_t used = 0;
      rc.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("AVU_SEED is not an unsigned integer: ") + env);
    }
  }
  if (c.seed) rc.seed = *c.seed;
  rc.sync();
  rc.model.validate();
  rc.scene.validate();
  rc.train.validate();
  return rc;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " not found: " + path);
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw ConfigError(std::string(what) + " not found: " + path);
}

void prepare_out(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec || !fs::is_directory(path)) throw ConfigError("cannot create output directory " + path);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json scene_to_json(const LatentScene& s) {
  json events = json::array();
  for (const auto& e : s.events) {
    events.push_back({{"cls", e.cls}, {"onset", e.onset}, {"offset", e.offset},
                      {"modality", static_cast<int>(e.modality)}, {"patch", e.patch},
                      {"radius", e.radius}});
  }
  return {{"segments", s.segments}, {"grid", s.grid}, {"height", s.height},
          {"width", s.width}, {"sigma", s.sigma}, {"seed", s.seed}, {"events", events}};
}

LatentScene scene_from_json(const json& j) {
  LatentScene s;
  s.segments = j.at("segments");
  s.grid = j.at("grid");
  s.height = j.at("height");
  s.width = j.at("width");
  s.sigma = j.value("sigma", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  for (const auto& e : j.at("events")) {
    SceneEvent ev;
    ev.cls = e.at("cls");
    ev.onset = e.at("onset");
    ev.offset = e.at("offset");
    ev.modality = static_cast<Modality>(e.at("modality").get<int>());
    ev.patch = e.at("patch");
    ev.radius = e.at("radius");
    s.events.push_back(ev);
  }
  return s;
}

struct DataSet {
  TaskPools pools;
  std::array<std::vector<fs::path>, kNumTasks> files;
  std::optional<std::vector<LatentScene>> ssl_scenes;
};

DataSet load_data(const std::string& dir) {
  require_dir(dir, "data directory");
  DataSet d;
  bool any = false;
  for (Task t : kAllTasks) {
    const fs::path sub = fs::path(dir) / std::string(task_name(t));
    if (!fs::is_directory(sub)) continue;
    auto& files = d.files[task_index(t)];
    for (const auto& e : fs::directory_iterator(sub))
      if (e.path().extension() == ".avuf") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      FeatureBundle b = read_bundle_file(f);
      if (b.task != t) {
        throw ValidationError(f.string() + ": task " + std::string(task_name(b.task)) +
                              " in the " + std::string(task_name(t)) + " directory");
      }
      d.pools[task_index(t)].push_back(std::move(b));
      any = true;
    }
    if (t == Task::kSSL && fs::is_regular_file(sub / kScenesFile)) {
      std::ifstream in(sub / kScenesFile);
      json j;
      try {
        j = json::parse(in);
        std::map<std::string, LatentScene> by_file;
        for (auto it = j.begin(); it != j.end(); ++it) by_file[it.key()] = scene_from_json(it.value());
        std::vector<LatentScene> scenes;
        for (const auto& f : files) {
          auto hit = by_file.find(f.filename().string());
          if (hit == by_file.end()) throw FormatError("no scene for " + f.filename().string());
          scenes.push_back(hit->second);
        }
        d.ssl_scenes = std::move(scenes);
      } catch (const json::exception& e) {
        throw FormatError((sub / kScenesFile).string() + ": " + e.what());
      }
    }
  }
  if (!any) throw ConfigError("no .avuf bundles under " + dir);
  return d;
}

void check_pools(const Model& model, const TaskPools& pools) {
  for (const auto& pool : pools)
    for (const auto& b : pool) model.check_bundle(b);
}

int cmd_gen(const RunConfig& rc, const std::string& out, std::optional<std::size_t> n) {
  prepare_out(out);
  const std::size_t count = n.value_or(rc.train_per_task);
  json summary;
  summary["config"] = to_json(rc);
  summary["per_task"] = count;
  for (Task t : kAllTasks) {
    const std::string name(task_name(t));
    const fs::path sub = fs::path(out) / name;
    fs::create_directories(sub);
    const auto samples = synth_samples(rc.scene, count, t, rc.data_seed * 100 + task_index(t));
    json scenes;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "%s_%05zu.avuf", name.c_str(), i);
      const fs::path file = sub / stem;
      write_bundle_file(samples[i].bundle, file);
      write_manifest(samples[i].bundle, file, "synthetic:" + std::to_string(rc.data_seed) + ":" + name + ":" + std::to_string(i), "avu gen");
      if (t == Task::kSSL) scenes[file.filename().string()] = scene_to_json(samples[i].scene);
    }
    if (t == Task::kSSL) write_json(sub / kScenesFile, scenes);
  }
  write_json(fs::path(out) / "gen.json", summary);
  std::cout << "wrote " << count << " bundles per task to " << out << '\n';
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data, const std::string& out) {
  const DataSet d = load_data(data);
  Model model(rc.model);
  check_pools(model, d.pools);
  prepare_out(out);
  write_json(fs::path(out) / "run.json", to_json(rc));
  const TrainResult result = train(model, d.pools, rc.train, fs::path(out) / "last_good.avuc");
  save_checkpoint(model, fs::path(out) / "model.avuc");
  write_loss_csv(result, fs::path(out) / "loss.csv");
  double tail = 0.0;
  const std::size_t k = std::min<std::size_t>(50, result.curve.size());
  for (std::size_t i = result.curve.size() - k; i < result.curve.size(); ++i) tail += result.curve[i].loss;
  std::cout << "trained " << result.curve.size() << " iterations; mean loss of the last " << k
            << ": " << (k ? tail / static_cast<double>(k) : 0.0) << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out,
             bool exports) {
  require_file(checkpoint, "checkpoint");
  const Model model = load_checkpoint(checkpoint);
  const DataSet d = load_data(data);
  check_pools(model, d.pools);
  prepare_out(out);
  const PoolPredictions preds = predict_pools(model, d.pools);
  const MetricReport rep = score_predictions(model.config(), d.pools, preds,
                                             d.ssl_scenes ? &*d.ssl_scenes : nullptr);
  {
    std::ofstream f(fs::path(out) / "metrics.json");
    if (!f) throw ConfigError("cannot write metrics.json in " + out);
    f << rep.to_json() << '\n';
  }
  if (exports) {
    for (Task t : {Task::kSSL, Task::kAVS}) {
      const auto& pool = d.pools[task_index(t)];
      for (std::size_t i = 0; i < pool.size(); ++i) {
        const fs::path dir = fs::path(out) / "exports" / std::string(task_name(t)) /
                             d.files[task_index(t)][i].stem();
        export_prediction(preds[task_index(t)][i], pool[i], model.vocab(), dir, false);
      }
    }
  }
  for (const auto& [k, v] : rep.values) std::printf("%-22s %.4f\n", k.c_str(), v);
  return 0;
}

int cmd_gradcheck(const RunConfig& rc, std::size_t seeds) {
  bool all = true;
  std::printf("%-6s %-14s %9s %8s %8s %10s %10s  %s\n", "seed", "module", "elements", "rel>tol",
              "abs>tol", "max_rel", "max_abs", "result");
  for (std::size_t s = 0; s < seeds; ++s) {
    for (const auto& r : gradient_suite(rc.seed + s)) {
      all = all && r.passed;
      std::printf("%-6llu %-14s %9zu %8zu %8zu %10.2e %10.2e  %s\n",
                  static_cast<unsigned long long>(rc.seed + s), r.module.c_str(),
                  r.compare.elements, r.compare.rel_violations, r.compare.abs_violations,
                  r.compare.max_rel, r.compare.max_abs, r.passed ? "PASS" : "FAIL");
    }
  }
  std::printf("%s\n", all ? "all modules pass" : "gradient check FAILED");
  return all ? 0 : 1;
}

int cmd_infer(const std::string& checkpoint, const std::string& bundle, const std::string& out) {
  require_file(checkpoint, "checkpoint");
  require_file(bundle, "bundle");
  const Model model = load_checkpoint(checkpoint);
  const FeatureBundle b = read_bundle_file(bundle);
  model.check_bundle(b);
  prepare_out(out);
  const Prediction pred = model.predict(b);
  export_prediction(pred, b, model.vocab(), out, true);
  std::cout << program_to_text(pred.program, model.vocab()) << '\n';
  return 0;
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : " ") + p;
  return s;
}

int cmd_inspect(const std::string& path, std::size_t num_classes) {
  require_file(path, "bundle");
  const FeatureBundle b = read_bundle_file(path);
  std::cout << "file=" << path << '\n'
            << "format=AVUF version=" << kBundleVersion << '\n'
            << "task=" << task_name(b.task) << " T=" << b.segments << " M=" << b.patches
            << " D_a=" << b.audio_dim << " D_v=" << b.visual_dim << " D_t=" << b.prompt_dim
            << " H=" << b.height << " W=" << b.width << '\n';
  if (!b.labels.labeled) {
    std::cout << "labels=none\n";
    return 0;
  }
  std::cout << "prompt_template=" << b.labels.prompt_template << '\n';
  std::vector<std::string> parts;
  if (const auto* l = std::get_if<AveLabels>(&b.labels.payload)) {
    for (auto c : l->classes) parts.push_back(std::to_string(c));
    std::cout << "classes=" << join(parts) << '\n';
  } else if (const auto* l = std::get_if<AvvpLabels>(&b.labels.payload)) {
    for (std::size_t t = 0; t < b.segments; ++t) {
      std::string seg;
      for (std::size_t k = 1; k <= l->num_classes; ++k) {
        if (l->audible(t, k)) seg += "a" + std::to_string(k);
        if (l->visible(t, k)) seg += "v" + std::to_string(k);
      }
      parts.push_back(seg.empty() ? "-" : seg);
    }
    std::cout << "events=" << join(parts) << '\n';
  } else if (const auto* l = std::get_if<SslLabels>(&b.labels.payload)) {
    for (auto v : l->bins) parts.push_back(v == SslLabels::kSilent ? "-" : std::to_string(v));
    std::cout << "bins=" << join(parts) << '\n';
  } else if (const auto* l = std::get_if<AvsLabels>(&b.labels.payload)) {
    const std::size_t hw = static_cast<std::size_t>(b.height) * b.width;
    for (std::size_t t = 0; t < b.segments; ++t) {
      std::size_t on = 0;
      for (std::size_t i = 0; i < hw; ++i) on += l->masks[t * hw + i] ? 1 : 0;
      parts.push_back(std::to_string(on));
    }
    std::cout << "mask_pixels=" << join(parts) << '\n';
  } else if (const auto* l = std::get_if<AvqaLabels>(&b.labels.payload)) {
    std::cout << "question=\"" << prompt_template(b.labels.prompt_template, num_classes).text
              << "\"\n"
              << "answer=" << answer_text(l->answer) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avu: audio-visual unified model toolkit"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "run config JSON");
    sub->add_option("--seed", common.seed, "run seed (overrides config and AVU_SEED)");
    sub->add_option("--threads", common.threads, "worker thread cap")->check(CLI::PositiveNumber);
  };

  std::string out, data, checkpoint, bundle;
  std::optional<std::size_t> n, iterations, batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> data_seed;
  std::size_t seeds = 1;
  bool no_exports = false;

  auto* gen = app.add_subcommand("gen", "write synthetic bundles per task");
  add_common(gen);
  gen->add_option("-o,--out", out, "output directory")->required();
  gen->add_option("-n,--per-task", n, "bundles per task");
  gen->add_option("--data-seed", data_seed, "scene stream seed");

  auto* tr = app.add_subcommand("train", "train a model on a data directory");
  add_common(tr);
  tr->add_option("-d,--data", data, "data directory from gen")->required();
  tr->add_option("-o,--out", out, "output directory")->required();
  tr->add_option("--iterations", iterations);
  tr->add_option("--batch", batch);
  tr->add_option("--lr", lr);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev);
  ev->add_option("-m,--checkpoint", checkpoint)->required();
  ev->add_option("-d,--data", data)->required();
  ev->add_option("-o,--out", out)->required();
  ev->add_flag("--no-exports", no_exports, "skip mask and heatmap files");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(gc);
  gc->add_option("--seeds", seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);

  auto* inf = app.add_subcommand("infer", "run one bundle through a checkpoint");
  add_common(inf);
  inf->add_option("-m,--checkpoint", checkpoint)->required();
  inf->add_option("-b,--bundle", bundle)->required();
  inf->add_option("-o,--out", out)->required();

  auto* ins = app.add_subcommand("inspect", "print a bundle header and labels");
  std::size_t classes = SceneConfig{}.num_classes;
  ins->add_option("bundle", bundle)->required();
  ins->add_option("--classes", classes, "event classes, for AVQA question text")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "avu-error: UsageError: %s\n", e.what());
    return 2;
  }

  try {
    set_max_workers(common.threads);
    if (ins->parsed()) return cmd_inspect(bundle, classes);
    RunConfig rc = resolve_config(common);
    if (gen->parsed()) {
      if (data_seed) rc.data_seed = *data_seed;
      return cmd_gen(rc, out, n);
    }
    if (tr->parsed()) {
      if (iterations) rc.train.iterations = *iterations;
      if (batch) rc.train.batch = *batch;
      if (lr) rc.train.lr = *lr;
      rc.train.validate();
      return cmd_train(rc, data, out);
    }
    if (ev->parsed()) return cmd_eval(checkpoint, data, out, !no_exports);
    if (gc->parsed()) return cmd_gradcheck(rc, seeds);
    if (inf->parsed()) return cmd_infer(checkpoint, bundle, out);
  } catch (const Error& e) {
    std::fprintf(stderr, "avu-error: %s: %s\n", e.kind().c_str(), e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "avu-error: IOError: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "avu-error: InternalError: %s\n", e.what());
    return 1;
  }
  return 0;
}

#include "avu/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "avu/config.hpp"
#include "avu/errors.hpp"
#include "avu/ops.hpp"
#include "avu/parallel.hpp"
#include "avu/prompts.hpp"
#include "avu/ssl.hpp"
#include "avu/synth.hpp"

namespace avu {

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("train config: " + why); };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) fail("lr_decay must be in (0, 1]");
  if (decay_epochs == 0) fail("decay_epochs must be positive");
  if (batch == 0) fail("batch must be positive");
  double total = 0.0;
  for (double w : mix) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail("mix weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) fail("at least one mix weight must be positive");
}

std::size_t epoch_length(const TaskPools& pools, std::size_t batch) {
  std::size_t total = 0;
  for (const auto& p : pools) total += p.size();
  return std::max<std::size_t>(1, (total + batch - 1) / batch);
}

double learning_rate(const TrainConfig& cfg, std::size_t iteration, std::size_t epoch_len) {
  const std::size_t epoch = iteration / std::max<std::size_t>(1, epoch_len);
  const auto drops = static_cast<double>(epoch / cfg.decay_epochs);
  return cfg.lr * std::pow(cfg.lr_decay, drops);
}

TaskBatch sample_task_batch(const TaskPools& pools, std::span<const double> mix,
                            std::size_t batch, Rng& rng) {
  if (mix.size() != kNumTasks) throw ConfigError("task mix needs one weight per task");
  double total = 0.0;
  for (std::size_t i = 0; i < kNumTasks; ++i) {
    if (mix[i] > 0.0 && pools[i].empty()) {
      throw ConfigError("task " + std::string(task_name(kAllTasks[i])) +
                        " has positive mix weight but an empty pool");
    }
    total += mix[i];
  }
  if (!(total > 0.0)) throw ConfigError("task mix has no positive weight");
  double u = rng.uniform(0.0, total);
  std::size_t pick = kNumTasks;
  for (std::size_t i = 0; i < kNumTasks; ++i) {
    if (mix[i] <= 0.0) continue;
    pick = i;
    if (u < mix[i]) break;
    u -= mix[i];
  }
  TaskBatch b;
  b.task = kAllTasks[pick];
  for (std::size_t i = 0; i < batch; ++i) b.indices.push_back(rng.index(pools[pick].size()));
  return b;
}

double masked_loss(std::span<const double> per_task, Task target) {
  if (per_task.size() != kNumTasks) throw ContractError("masked_loss: one loss per task expected");
  double total = 0.0;
  for (std::size_t i = 0; i < kNumTasks; ++i) total += (i == task_index(target) ? 1.0 : 0.0) * per_task[i];
  return total;
}

Tensor masked_loss(const std::array<std::optional<Tensor>, kNumTasks>& per_task, Task target) {
  const auto& l = per_task[task_index(target)];
  if (!l || !l->defined()) {
    throw ContractError("masked_loss: no loss computed for target task " +
                        std::string(task_name(target)));
  }
  // The remaining indicator weights are zero; their terms are left out of
  // the graph entirely, so their head-specific parameters get no gradient.
  return *l;
}

TrainResult train(Model& model, const TaskPools& pools, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& last_good, const StepHook& hook) {
  config.validate();
  Rng rng(config.seed);
  ParamStore& store = model.params();
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  Adam adam(store.tensors(), adam_cfg);
  const std::size_t epoch_len = epoch_length(pools, config.batch);
  TrainResult result;
  result.curve.reserve(config.iterations);
  const double inv_batch = 1.0 / static_cast<double>(config.batch);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double lr = learning_rate(config, it, epoch_len);
    adam.set_lr(lr);
    const TaskBatch batch = sample_task_batch(pools, config.mix, config.batch, rng);
    store.zero_grad();
    double total = 0.0;
    for (std::size_t idx : batch.indices) {
      const auto diverged = [&](const std::string& what) {
        // Parameters are still those of the last completed step.
        if (last_good) save_checkpoint(model, *last_good);
        throw NumericsError(what + " at iteration " + std::to_string(it) + " (task " +
                            std::string(task_name(batch.task)) + ")");
      };
      std::array<std::optional<Tensor>, kNumTasks> losses;
      try {
        losses[task_index(batch.task)] = model.loss(pools[task_index(batch.task)][idx]);
      } catch (const NumericsError& e) {
        diverged(e.what());
      }
      Tensor loss = masked_loss(losses, batch.task);
      const double value = loss.item();
      if (!std::isfinite(value)) diverged("non-finite loss");
      total += value;
      backprop(ops::scale(loss, inv_batch));
    }
    if (hook) hook(it, batch.task, model);
    adam.step();
    result.curve.push_back({it, batch.task, total * inv_batch, lr});
  }
  return result;
}

void write_loss_csv(const TrainResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write loss curve to " + path.string());
  out << "iteration,task,loss,lr\n";
  out.precision(17);
  for (const auto& r : result.curve)
    out << r.iteration << ',' << task_name(r.task) << ',' << r.loss << ',' << r.lr << '\n';
}

namespace {

void eval_ave(const std::vector<FeatureBundle>& pool, const std::vector<Prediction>& preds,
              MetricReport& rep) {
  std::vector<int> pred, gold;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& g = std::get<AveLabels>(pool[i].labels.payload);
    const auto& p = std::get<AveLabels>(preds[i].labels.payload);
    for (std::size_t t = 0; t < g.classes.size(); ++t) {
      gold.push_back(g.classes[t]);
      pred.push_back(p.classes[t]);
    }
  }
  rep.values["ave.accuracy"] = segment_accuracy(pred, gold);
}

void eval_avvp(const std::vector<FeatureBundle>& pool, const std::vector<Prediction>& preds,
               MetricReport& rep) {
  Counts audio, visual, av;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const FeatureBundle& b = pool[i];
    const auto& g = std::get<AvvpLabels>(b.labels.payload);
    const auto& p = std::get<AvvpLabels>(preds[i].labels.payload);
    for (std::size_t t = 0; t < b.segments; ++t) {
      for (std::size_t k = 1; k <= g.num_classes; ++k) {
        audio.add(p.audible(t, k), g.audible(t, k));
        visual.add(p.visible(t, k), g.visible(t, k));
        av.add(p.audible(t, k) && p.visible(t, k), g.audible(t, k) && g.visible(t, k));
      }
    }
  }
  Counts all = audio;
  all.merge(visual);
  all.merge(av);
  rep.values["avvp.audio_f1"] = audio.f1();
  rep.values["avvp.visual_f1"] = visual.f1();
  rep.values["avvp.av_f1"] = av.f1();
  rep.values["avvp.type_f1"] = (audio.f1() + visual.f1() + av.f1()) / 3.0;
  rep.values["avvp.event_f1"] = all.f1();
}

void eval_ssl(const std::vector<FeatureBundle>& pool, const std::vector<Prediction>& preds,
              const std::vector<LatentScene>* scenes, MetricReport& rep) {
  std::vector<double> ious;
  std::size_t bins_hit = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const FeatureBundle& b = pool[i];
    const auto& g = std::get<SslLabels>(b.labels.payload);
    const Prediction& pred = preds[i];
    const auto& p = std::get<SslLabels>(pred.labels.payload);
    const std::size_t m = b.patches;
    const std::size_t grid = grid_side(m);
    for (std::size_t t = 0; t < g.bins.size(); ++t) {
      if (g.bins[t] == SslLabels::kSilent) continue;
      std::vector<std::uint8_t> truth;
      if (scenes && i < scenes->size()) {
        const LatentScene& sc = (*scenes)[i];
        for (const auto& e : sc.events) {
          if (e.modality == Modality::kAV && e.active(t)) truth = event_disk(sc, e);
        }
      }
      if (truth.empty()) {
        LatentScene sc;
        sc.segments = b.segments;
        sc.grid = grid;
        sc.height = b.height;
        sc.width = b.width;
        SceneEvent e;
        e.patch = static_cast<std::size_t>(g.bins[t]);
        e.radius = 0.5;
        truth = event_disk(sc, e);
      }
      std::span<const double> heat(pred.heatmap.data() + t * m, m);
      const auto region = heatmap_region(heat, grid, b.height, b.width, 0.5);
      ious.push_back(mask_iou(region, truth));
      bins_hit += p.bins[t] == g.bins[t] ? 1 : 0;
    }
  }
  if (ious.empty()) return;
  rep.values["ssl.ciou"] = ciou_at(ious, 0.5);
  rep.values["ssl.auc"] = ciou_auc(ious);
  rep.values["ssl.bin_accuracy"] = static_cast<double>(bins_hit) / static_cast<double>(ious.size());
}

void eval_avs(const std::vector<FeatureBundle>& pool, const std::vector<Prediction>& preds,
              MetricReport& rep) {
  std::vector<double> ious, fs;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const FeatureBundle& b = pool[i];
    const auto& g = std::get<AvsLabels>(b.labels.payload);
    const Prediction& pred = preds[i];
    const std::size_t hw = static_cast<std::size_t>(b.height) * b.width;
    for (std::size_t t = 0; t < b.segments; ++t) {
      std::span<const std::uint8_t> pm(pred.masks.data() + t * hw, hw);
      std::span<const std::uint8_t> gm(g.masks.data() + t * hw, hw);
      ious.push_back(mask_iou(pm, gm));
      fs.push_back(mask_fscore(pm, gm, 0.3));
    }
  }
  rep.values["avs.miou"] = mean(ious);
  rep.values["avs.fscore"] = mean(fs);
}

void eval_avqa(const std::vector<FeatureBundle>& pool, const std::vector<Prediction>& preds,
               std::size_t num_classes, MetricReport& rep) {
  std::array<std::size_t, 4> hit{}, seen{};
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const FeatureBundle& b = pool[i];
    const auto& g = std::get<AvqaLabels>(b.labels.payload);
    const auto& p = std::get<AvqaLabels>(preds[i].labels.payload);
    const auto q = static_cast<std::size_t>(
        prompt_template(b.labels.prompt_template, num_classes).question);
    ++seen[q];
    hit[q] += p.answer == g.answer ? 1 : 0;
  }
  std::size_t h = 0, n = 0;
  const char* names[] = {"", "exist", "count", "location"};
  for (std::size_t q = 1; q < 4; ++q) {
    h += hit[q];
    n += seen[q];
    if (seen[q]) {
      rep.values[std::string("avqa.") + names[q] + "_accuracy"] =
          static_cast<double>(hit[q]) / static_cast<double>(seen[q]);
    }
  }
  rep.values["avqa.accuracy"] = static_cast<double>(h) / static_cast<double>(n);
}

}  // namespace

PoolPredictions predict_pools(const Model& model, const TaskPools& pools) {
  PoolPredictions out;
  for (Task t : kAllTasks) {
    const auto& pool = pools[task_index(t)];
    auto& preds = out[task_index(t)];
    preds.resize(pool.size());
    parallel_for(pool.size(), [&](std::size_t i) { preds[i] = model.predict(pool[i]); });
  }
  return out;
}

MetricReport score_predictions(const ModelConfig& config, const TaskPools& pools,
                               const PoolPredictions& preds,
                               const std::vector<LatentScene>* ssl_scenes) {
  MetricReport rep;
  bool any = false;
  for (Task t : kAllTasks) {
    const auto& pool = pools[task_index(t)];
    const auto& pred = preds[task_index(t)];
    if (pool.empty()) continue;
    if (pred.size() != pool.size()) {
      throw ContractError("score_predictions: " + std::to_string(pred.size()) +
                          " predictions for " + std::to_string(pool.size()) + " " +
                          std::string(task_name(t)) + " bundles");
    }
    for (const auto& b : pool) {
      if (!b.labels.labeled) throw ValidationError("evaluate: unlabeled bundle in the pool");
    }
    any = true;
    rep.meta["samples." + std::string(task_name(t))] = std::to_string(pool.size());
    switch (t) {
      case Task::kAVE: eval_ave(pool, pred, rep); break;
      case Task::kAVVP: eval_avvp(pool, pred, rep); break;
      case Task::kSSL: eval_ssl(pool, pred, ssl_scenes, rep); break;
      case Task::kAVS: eval_avs(pool, pred, rep); break;
      case Task::kAVQA: eval_avqa(pool, pred, config.num_classes, rep); break;
    }
  }
  if (!any) throw ConfigError("evaluate: every pool is empty");
  rep.meta["use_tpm"] = config.use_tpm ? "true" : "false";
  rep.meta["use_spm"] = config.use_spm ? "true" : "false";
  rep.meta["use_tpgl"] = config.use_tpgl ? "true" : "false";
  return rep;
}

MetricReport evaluate(const Model& model, const TaskPools& pools,
                      const std::vector<LatentScene>* ssl_scenes) {
  bool any = false;
  for (const auto& p : pools) any = any || !p.empty();
  if (!any) throw ConfigError("evaluate: every pool is empty");
  return score_predictions(model.config(), pools, predict_pools(model, pools), ssl_scenes);
}

AblationResult ablate(const ModelConfig& model_config, const AblationSwitches& switches,
                      const TaskPools& train_pools, const TaskPools& eval_pools,
                      const TrainConfig& train_config) {
  ModelConfig on = model_config;
  on.use_tpm = on.use_spm = on.use_tpgl = true;
  ModelConfig off = model_config;
  off.use_tpm = switches.tpm;
  off.use_spm = switches.spm;
  off.use_tpgl = switches.tpgl;
  AblationResult r;
  {
    Model m(on);
    train(m, train_pools, train_config);
    r.reference = evaluate(m, eval_pools);
  }
  {
    Model m(off);
    train(m, train_pools, train_config);
    r.variant = evaluate(m, eval_pools);
  }
  return r;
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw FormatError("checkpoint truncated while reading " + what);
  }
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

std::string get_string(std::istream& in, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw FormatError("checkpoint truncated while reading " + what);
  }
  return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 4);
    put<std::uint16_t>(out, kCheckpointVersion);
    const std::string cfg = to_json(model.config()).dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const auto& entries = model.params().entries();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
      put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      put<std::uint8_t>(out, static_cast<std::uint8_t>(e.tensor.rank()));
      for (std::size_t d : e.tensor.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
      for (double v : e.tensor.data()) put<double>(out, v);
    }
    if (!out) throw ConfigError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("checkpoint " + path.string() + ": bad magic");
  }
  const auto version = get<std::uint16_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  const auto cfg_len = get<std::uint32_t>(in, "config length");
  const std::string cfg = get_string(in, cfg_len, "config");
  ModelConfig mc;
  try {
    mc = model_config_from_json(nlohmann::json::parse(cfg));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  Model model(mc);
  const auto count = get<std::uint32_t>(in, "parameter count");
  const auto& entries = model.params().entries();
  if (count != entries.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(entries.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint16_t>(in, "name length");
    const std::string name = get_string(in, name_len, "parameter name");
    const ParamEntry* e = model.params().find(name);
    if (!e) throw FormatError("checkpoint parameter '" + name + "' unknown to the model");
    const auto rank = get<std::uint8_t>(in, "rank");
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(get<std::uint32_t>(in, "dims"));
    if (shape != e->tensor.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) +
                        ", model expects " + shape_str(e->tensor.shape()));
    }
    Tensor t = e->tensor;
    for (double& v : t.mutable_data()) v = get<double>(in, "parameter data");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint has trailing bytes");
  return model;
}

}  // namespace avu

#include "avu/config.hpp"

#include <fstream>
#include <set>

#include "avu/errors.hpp"

namespace avu {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

void RunConfig::sync() {
  model.segments = scene.segments;
  model.patches = scene.patches();
  model.num_classes = scene.num_classes;
  model.audio_dim = scene.audio_dim;
  model.visual_dim = scene.visual_dim;
  model.height = scene.height;
  model.width = scene.width;
  model.seed = seed;
  train.seed = seed;
}

json to_json(const ModelConfig& c) {
  return {{"segments", c.segments},   {"patches", c.patches},
          {"audio_dim", c.audio_dim}, {"visual_dim", c.visual_dim},
          {"prompt_dim", c.prompt_dim}, {"dim", c.dim},
          {"heads", c.heads},         {"num_classes", c.num_classes},
          {"answers", c.answers},     {"height", c.height},
          {"width", c.width},         {"max_window", c.max_window},
          {"include_global", c.include_global}, {"use_tpm", c.use_tpm},
          {"use_spm", c.use_spm},     {"use_tpgl", c.use_tpgl},
          {"layer_norm", c.layer_norm}, {"ffn_dim", c.ffn_dim},
          {"mask_channels", c.mask_channels}, {"seed", c.seed}};
}

json to_json(const SceneConfig& c) {
  return {{"segments", c.segments},     {"grid", c.grid},
          {"num_classes", c.num_classes}, {"audio_dim", c.audio_dim},
          {"visual_dim", c.visual_dim}, {"height", c.height},
          {"width", c.width},           {"sigma", c.sigma},
          {"radius_min", c.radius_min}, {"radius_max", c.radius_max},
          {"max_events", c.max_events}, {"seed", c.seed}};
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},           {"lr_decay", c.lr_decay},
          {"decay_epochs", c.decay_epochs}, {"batch", c.batch},
          {"iterations", c.iterations}, {"mix", c.mix},
          {"seed", c.seed}};
}

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},         {"scene", to_json(c.scene)},
          {"train", to_json(c.train)},         {"train_per_task", c.train_per_task},
          {"eval_per_task", c.eval_per_task},  {"data_seed", c.data_seed},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  const std::string w = "model";
  reject_unknown(j, {"segments", "patches", "audio_dim", "visual_dim", "prompt_dim", "dim",
                     "heads", "num_classes", "answers", "height", "width", "max_window",
                     "include_global", "use_tpm", "use_spm", "use_tpgl", "layer_norm",
                     "ffn_dim", "mask_channels", "seed"},
                 w);
  ModelConfig c;
  read(j, "segments", c.segments, w);
  read(j, "patches", c.patches, w);
  read(j, "audio_dim", c.audio_dim, w);
  read(j, "visual_dim", c.visual_dim, w);
  read(j, "prompt_dim", c.prompt_dim, w);
  read(j, "dim", c.dim, w);
  read(j, "heads", c.heads, w);
  read(j, "num_classes", c.num_classes, w);
  read(j, "answers", c.answers, w);
  read(j, "height", c.height, w);
  read(j, "width", c.width, w);
  read(j, "max_window", c.max_window, w);
  read(j, "include_global", c.include_global, w);
  read(j, "use_tpm", c.use_tpm, w);
  read(j, "use_spm", c.use_spm, w);
  read(j, "use_tpgl", c.use_tpgl, w);
  read(j, "layer_norm", c.layer_norm, w);
  read(j, "ffn_dim", c.ffn_dim, w);
  read(j, "mask_channels", c.mask_channels, w);
  read(j, "seed", c.seed, w);
  return c;
}

SceneConfig scene_config_from_json(const json& j) {
  const std::string w = "scene";
  reject_unknown(j, {"segments", "grid", "num_classes", "audio_dim", "visual_dim", "height",
                     "width", "sigma", "radius_min", "radius_max", "max_events", "seed"},
                 w);
  SceneConfig c;
  read(j, "segments", c.segments, w);
  read(j, "grid", c.grid, w);
  read(j, "num_classes", c.num_classes, w);
  read(j, "audio_dim", c.audio_dim, w);
  read(j, "visual_dim", c.visual_dim, w);
  read(j, "height", c.height, w);
  read(j, "width", c.width, w);
  read(j, "sigma", c.sigma, w);
  read(j, "radius_min", c.radius_min, w);
  read(j, "radius_max", c.radius_max, w);
  read(j, "max_events", c.max_events, w);
  read(j, "seed", c.seed, w);
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  const std::string w = "train";
  reject_unknown(j, {"lr", "lr_decay", "decay_epochs", "batch", "iterations", "mix", "seed"}, w);
  TrainConfig c;
  read(j, "lr", c.lr, w);
  read(j, "lr_decay", c.lr_decay, w);
  read(j, "decay_epochs", c.decay_epochs, w);
  read(j, "batch", c.batch, w);
  read(j, "iterations", c.iterations, w);
  read(j, "mix", c.mix, w);
  read(j, "seed", c.seed, w);
  return c;
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"model", "scene", "train", "train_per_task", "eval_per_task", "data_seed",
                     "seed"},
                 "config");
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("scene")) c.scene = scene_config_from_json(j.at("scene"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  read(j, "train_per_task", c.train_per_task, "config");
  read(j, "eval_per_task", c.eval_per_task, "config");
  read(j, "data_seed", c.data_seed, "config");
  read(j, "seed", c.seed, "config");
  c.sync();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace avu

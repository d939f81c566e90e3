#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "avu/model.hpp"
#include "avu/synth.hpp"
#include "avu/trainer.hpp"

namespace avu {

// Everything one run needs. Sections are optional in files; missing keys
// keep their defaults and unknown keys raise ConfigError.
struct RunConfig {
  ModelConfig model;
  SceneConfig scene;
  TrainConfig train;
  std::size_t train_per_task = 320;
  std::size_t eval_per_task = 100;
  std::uint64_t data_seed = 11;
  std::uint64_t seed = 1;  // copied into model and train seeds

  // Copies the shared dims (T, M, K, feature widths, mask size) from the scene
  // into the model section, and the run seed into model and trainer.
  void sync();
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const SceneConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const RunConfig& c);

ModelConfig model_config_from_json(const nlohmann::json& j);
SceneConfig scene_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

// Parse errors and unknown keys are reported as ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace avu

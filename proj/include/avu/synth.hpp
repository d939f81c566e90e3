#pragma once

#include <cstdint>
#include <vector>

#include "avu/bundle.hpp"
#include "avu/rng.hpp"
#include "avu/vocab.hpp"

namespace avu {

struct SceneConfig {
  std::size_t segments = 10;     // T
  std::size_t grid = 4;          // g, M = g * g
  std::size_t num_classes = 6;   // K
  std::size_t audio_dim = 128;   // D_a
  std::size_t visual_dim = 512;  // D_v
  std::size_t height = 64;
  std::size_t width = 64;
  double sigma = 0.1;
  double radius_min = 0.45;  // disk radius, in patch widths
  double radius_max = 0.6;
  std::size_t max_events = 3;
  std::uint64_t seed = 7;  // class prototypes

  std::size_t patches() const { return grid * grid; }
  void validate() const;
};

struct SceneEvent {
  std::size_t cls = 1;  // 1..K
  std::size_t onset = 0;
  std::size_t offset = 1;  // exclusive
  Modality modality = Modality::kAV;
  std::size_t patch = 0;
  double radius = 0.5;

  bool active(std::size_t t) const { return t >= onset && t < offset; }
  bool audible() const { return modality != Modality::kV; }
  bool visible() const { return modality != Modality::kA; }
};

struct LatentScene {
  std::size_t segments = 0;
  std::size_t grid = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<SceneEvent> events;
};

// Unit-norm class prototypes, drawn once per SceneConfig::seed.
struct Prototypes {
  std::vector<std::vector<double>> audio;   // [K][D_a], row k-1 is class k
  std::vector<std::vector<double>> visual;  // [K][D_v]
};
Prototypes make_prototypes(const SceneConfig& config);

// Draws a scene meeting the needs of `task` and its prompt template.
LatentScene sample_scene(const SceneConfig& config, Task task, std::uint16_t prompt_template,
                         Rng& rng);

LabelBlock derive_labels(const LatentScene& scene, Task task, std::uint16_t prompt_template,
                         std::size_t num_classes);

// Filled disk of one event, [H * W].
std::vector<std::uint8_t> event_disk(const LatentScene& scene, const SceneEvent& event);

FeatureBundle render_bundle(const LatentScene& scene, const SceneConfig& config,
                            const Prototypes& protos, Task task,
                            std::uint16_t prompt_template, Rng& noise);

struct SynthSample {
  LatentScene scene;
  FeatureBundle bundle;
};

// Draws the prompt template for a task (AVQA: question type uniform, then
// the asked class uniform).
std::uint16_t sample_prompt(const SceneConfig& config, Task task, Rng& rng);

// `stream` seeds scene sampling and noise; prototypes come from config.seed.
std::vector<SynthSample> synth_samples(const SceneConfig& config, std::size_t n, Task task,
                                       std::uint64_t stream);
std::vector<FeatureBundle> synth_generate(const SceneConfig& config, std::size_t n, Task task,
                                          std::uint64_t stream);

}  // namespace avu

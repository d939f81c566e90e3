#include "avu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avu/errors.hpp"
#include "avu/prompts.hpp"

namespace avu {

void SceneConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("scene config: " + why); };
  if (segments == 0 || segments > 1000) fail("segments must be in [1, 1000]");
  if (grid < 2) fail("grid must be at least 2");
  if (num_classes < 2 || num_classes > 255) fail("num_classes must be in [2, 255]");
  if (audio_dim == 0 || visual_dim == 0) fail("feature dims must be positive");
  if (height == 0 || width == 0 || height % grid != 0 || width % grid != 0)
    fail("mask size must be a positive multiple of the grid");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) fail("sigma must be finite and >= 0");
  if (!(radius_min > 0.0) || radius_max < radius_min) fail("radius range is invalid");
  if (max_events == 0) fail("max_events must be positive");
  if (max_events > num_classes || max_events > patches())
    fail("max_events exceeds the class or patch count");
}

Prototypes make_prototypes(const SceneConfig& config) {
  config.validate();
  Rng rng(config.seed * 0x9E3779B97F4A7C15ULL + 0x51ED270BULL);
  auto unit = [&rng](std::size_t dim) {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
  };
  Prototypes p;
  for (std::size_t k = 0; k < config.num_classes; ++k) p.audio.push_back(unit(config.audio_dim));
  for (std::size_t k = 0; k < config.num_classes; ++k) p.visual.push_back(unit(config.visual_dim));
  return p;
}

namespace {

std::pair<std::size_t, std::size_t> random_span(std::size_t t, std::size_t min_len, Rng& rng) {
  min_len = std::clamp<std::size_t>(min_len, 1, t);
  const auto onset = static_cast<std::size_t>(rng.range(0, static_cast<int>(t - min_len)));
  const auto offset =
      static_cast<std::size_t>(rng.range(static_cast<int>(onset + min_len), static_cast<int>(t)));
  return {onset, offset};
}

bool overlaps_av(const std::vector<SceneEvent>& events, std::size_t onset, std::size_t offset) {
  for (const auto& e : events) {
    if (e.modality == Modality::kAV && onset < e.offset && e.onset < offset) return true;
  }
  return false;
}

Modality random_modality(Rng& rng) { return static_cast<Modality>(rng.range(0, 2)); }

}  // namespace

std::uint16_t sample_prompt(const SceneConfig& config, Task task, Rng& rng) {
  if (task != Task::kAVQA) return task_prompt_id(task);
  switch (rng.range(0, 2)) {
    case 0: return exist_prompt_id(static_cast<std::size_t>(rng.range(1, static_cast<int>(config.num_classes))));
    case 1: return count_prompt_id(config.num_classes);
    default: return location_prompt_id(config.num_classes);
  }
}

LatentScene sample_scene(const SceneConfig& config, Task task, std::uint16_t prompt_template,
                         Rng& rng) {
  config.validate();
  const PromptTemplate prompt = prompt_template_checked(prompt_template, config.num_classes, task);
  const std::size_t t = config.segments;
  const std::size_t k = config.num_classes;
  LatentScene scene;
  scene.segments = t;
  scene.grid = config.grid;
  scene.height = config.height;
  scene.width = config.width;
  scene.sigma = config.sigma;

  std::vector<std::size_t> classes(k);
  std::iota(classes.begin(), classes.end(), 1);
  std::shuffle(classes.begin(), classes.end(), rng.engine());
  std::vector<std::size_t> patches(config.patches());
  std::iota(patches.begin(), patches.end(), 0);
  std::shuffle(patches.begin(), patches.end(), rng.engine());

  const auto max_n = static_cast<int>(config.max_events);
  std::size_t n = static_cast<std::size_t>(rng.range(1, max_n));
  std::vector<Modality> mods(n);
  for (auto& m : mods) m = random_modality(rng);
  std::size_t first_min_len = 1;

  bool exist_yes = false;
  switch (task) {
    case Task::kAVE:
    case Task::kSSL:
      mods[0] = Modality::kAV;
      first_min_len = 2;
      break;
    case Task::kAVS:
      mods[0] = Modality::kAV;
      first_min_len = (t + 1) / 2;
      break;
    case Task::kAVVP: break;
    case Task::kAVQA:
      switch (prompt.question) {
        case QuestionType::kExist: {
          exist_yes = rng.bernoulli(0.5);
          auto it = std::find(classes.begin(), classes.end(), prompt.cls);
          if (exist_yes) {
            std::iter_swap(classes.begin(), it);
            if (mods[0] == Modality::kV) mods[0] = rng.bernoulli(0.5) ? Modality::kA : Modality::kAV;
          }
          break;
        }
        case QuestionType::kCount: {
          const std::size_t audible = static_cast<std::size_t>(rng.range(1, std::min(2, max_n)));
          const bool distractor = audible < config.max_events && rng.bernoulli(0.5);
          n = audible + (distractor ? 1 : 0);
          mods.assign(n, Modality::kA);
          for (std::size_t i = 0; i < audible; ++i) mods[i] = rng.bernoulli(0.5) ? Modality::kA : Modality::kAV;
          if (distractor) mods[audible] = Modality::kV;
          break;
        }
        case QuestionType::kLocation:
          mods[0] = Modality::kAV;
          for (std::size_t i = 1; i < n; ++i) mods[i] = rng.bernoulli(0.5) ? Modality::kA : Modality::kV;
          first_min_len = 2;
          break;
        case QuestionType::kNone: break;
      }
      break;
  }

  for (std::size_t i = 0; i < n; ++i) {
    SceneEvent e;
    e.cls = classes[i];
    e.patch = patches[i];
    e.modality = mods[i];
    e.radius = rng.uniform(config.radius_min, config.radius_max);
    if (prompt.question == QuestionType::kExist && !exist_yes && e.cls == prompt.cls) {
      e.modality = Modality::kV;
    }
    auto span = random_span(t, i == 0 ? first_min_len : 1, rng);
    if (e.modality == Modality::kAV) {
      int tries = 0;
      while (overlaps_av(scene.events, span.first, span.second) && tries++ < 64) {
        span = random_span(t, 1, rng);
      }
      // No room left for another sounding-visible event: keep it audible only.
      if (overlaps_av(scene.events, span.first, span.second)) e.modality = Modality::kA;
    }
    e.onset = span.first;
    e.offset = span.second;
    scene.events.push_back(e);
  }
  return scene;
}

std::vector<std::uint8_t> event_disk(const LatentScene& scene, const SceneEvent& event) {
  const double cell_h = static_cast<double>(scene.height) / static_cast<double>(scene.grid);
  const double cell_w = static_cast<double>(scene.width) / static_cast<double>(scene.grid);
  const double cy = (static_cast<double>(event.patch / scene.grid) + 0.5) * cell_h;
  const double cx = (static_cast<double>(event.patch % scene.grid) + 0.5) * cell_w;
  std::vector<std::uint8_t> mask(scene.height * scene.width, 0);
  for (std::size_t y = 0; y < scene.height; ++y) {
    for (std::size_t x = 0; x < scene.width; ++x) {
      const double dy = (static_cast<double>(y) + 0.5 - cy) / cell_h;
      const double dx = (static_cast<double>(x) + 0.5 - cx) / cell_w;
      if (dx * dx + dy * dy <= event.radius * event.radius) mask[y * scene.width + x] = 1;
    }
  }
  return mask;
}

LabelBlock derive_labels(const LatentScene& scene, Task task, std::uint16_t prompt_template,
                         std::size_t num_classes) {
  const std::size_t t = scene.segments;
  auto sounding_at = [&](std::size_t seg) -> const SceneEvent* {
    const SceneEvent* found = nullptr;
    for (const auto& e : scene.events) {
      if (e.modality != Modality::kAV || !e.active(seg)) continue;
      if (found) throw ConfigError("scene has two sounding visible events at segment " + std::to_string(seg));
      found = &e;
    }
    return found;
  };
  LabelBlock block;
  block.labeled = true;
  block.prompt_template = prompt_template;
  switch (task) {
    case Task::kAVE: {
      AveLabels l;
      l.num_classes = static_cast<std::uint16_t>(num_classes);
      for (std::size_t s = 0; s < t; ++s) {
        const SceneEvent* e = sounding_at(s);
        l.classes.push_back(static_cast<std::uint8_t>(e ? e->cls : 0));
      }
      block.payload = l;
      break;
    }
    case Task::kAVVP: {
      AvvpLabels l;
      l.num_classes = static_cast<std::uint16_t>(num_classes);
      l.audio.assign(t * num_classes, 0);
      l.visual.assign(t * num_classes, 0);
      for (const auto& e : scene.events) {
        for (std::size_t s = e.onset; s < e.offset; ++s) {
          if (e.audible()) l.audio[s * num_classes + e.cls - 1] = 1;
          if (e.visible()) l.visual[s * num_classes + e.cls - 1] = 1;
        }
      }
      block.payload = l;
      break;
    }
    case Task::kSSL: {
      SslLabels l;
      for (std::size_t s = 0; s < t; ++s) {
        const SceneEvent* e = sounding_at(s);
        l.bins.push_back(e ? static_cast<std::int32_t>(e->patch) : SslLabels::kSilent);
      }
      block.payload = l;
      break;
    }
    case Task::kAVS: {
      AvsLabels l;
      const std::size_t hw = scene.height * scene.width;
      l.masks.assign(t * hw, 0);
      for (const auto& e : scene.events) {
        if (e.modality != Modality::kAV) continue;
        const auto disk = event_disk(scene, e);
        for (std::size_t s = e.onset; s < e.offset; ++s)
          for (std::size_t i = 0; i < hw; ++i) l.masks[s * hw + i] |= disk[i];
      }
      block.payload = l;
      break;
    }
    case Task::kAVQA: {
      const PromptTemplate p = prompt_template_checked(prompt_template, num_classes, task);
      AvqaLabels l;
      l.num_answers = answer::kCount;
      if (p.question == QuestionType::kExist) {
        bool yes = false;
        for (const auto& e : scene.events) yes = yes || (e.audible() && e.cls == p.cls);
        l.answer = yes ? answer::kYes : answer::kNo;
      } else if (p.question == QuestionType::kCount) {
        std::vector<bool> seen(num_classes + 1, false);
        std::size_t count = 0;
        for (const auto& e : scene.events) {
          if (e.audible() && !seen[e.cls]) {
            seen[e.cls] = true;
            ++count;
          }
        }
        if (count < 1 || count > 2) {
          throw ConfigError("count question needs one or two sounding classes, scene has " +
                            std::to_string(count));
        }
        l.answer = count == 1 ? answer::kOne : answer::kTwo;
      } else {
        const SceneEvent* source = nullptr;
        for (const auto& e : scene.events) {
          if (e.modality != Modality::kAV) continue;
          if (source) throw ConfigError("location question needs exactly one sounding object");
          source = &e;
        }
        if (!source) throw ConfigError("location question needs a sounding object");
        l.answer = quadrant_answer(source->patch, scene.grid);
      }
      block.payload = l;
      break;
    }
  }
  return block;
}

FeatureBundle render_bundle(const LatentScene& scene, const SceneConfig& config,
                            const Prototypes& protos, Task task,
                            std::uint16_t prompt_template, Rng& noise) {
  const std::size_t t = config.segments;
  const std::size_t m = config.patches();
  const std::size_t da = config.audio_dim;
  const std::size_t dv = config.visual_dim;
  FeatureBundle b;
  b.task = task;
  b.segments = static_cast<std::uint16_t>(t);
  b.patches = static_cast<std::uint16_t>(m);
  b.audio_dim = static_cast<std::uint16_t>(da);
  b.visual_dim = static_cast<std::uint16_t>(dv);
  b.prompt_dim = 0;
  b.height = static_cast<std::uint16_t>(config.height);
  b.width = static_cast<std::uint16_t>(config.width);

  const double sa = config.sigma / std::sqrt(static_cast<double>(da));
  const double sv = config.sigma / std::sqrt(static_cast<double>(dv));
  std::vector<double> audio(t * da, 0.0);
  std::vector<double> patch(t * m * dv, 0.0);
  for (const auto& e : scene.events) {
    for (std::size_t s = e.onset; s < e.offset; ++s) {
      if (e.audible()) {
        const auto& mu = protos.audio[e.cls - 1];
        for (std::size_t j = 0; j < da; ++j) audio[s * da + j] += mu[j];
      }
      if (e.visible()) {
        const auto& mu = protos.visual[e.cls - 1];
        double* dst = patch.data() + (s * m + e.patch) * dv;
        for (std::size_t j = 0; j < dv; ++j) dst[j] += mu[j];
      }
    }
  }
  for (auto& x : audio) x += noise.normal(0.0, sa);
  for (auto& x : patch) x += noise.normal(0.0, sv);

  b.audio.assign(audio.begin(), audio.end());
  b.patch.assign(patch.begin(), patch.end());
  b.frame.assign(t * dv, 0.0f);
  for (std::size_t s = 0; s < t; ++s) {
    for (std::size_t j = 0; j < dv; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < m; ++p) acc += static_cast<double>(b.patch[(s * m + p) * dv + j]);
      b.frame[s * dv + j] = static_cast<float>(acc / static_cast<double>(m));
    }
  }
  b.labels = derive_labels(scene, task, prompt_template, config.num_classes);
  return b;
}

std::vector<SynthSample> synth_samples(const SceneConfig& config, std::size_t n, Task task,
                                       std::uint64_t stream) {
  const Prototypes protos = make_prototypes(config);
  Rng master(stream);
  std::vector<SynthSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = master.next();
    Rng rng(seed);
    SynthSample s;
    const std::uint16_t tmpl = sample_prompt(config, task, rng);
    s.scene = sample_scene(config, task, tmpl, rng);
    s.scene.seed = seed;
    s.bundle = render_bundle(s.scene, config, protos, task, tmpl, rng);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<FeatureBundle> synth_generate(const SceneConfig& config, std::size_t n, Task task,
                                          std::uint64_t stream) {
  std::vector<FeatureBundle> out;
  for (auto& s : synth_samples(config, n, task, stream)) out.push_back(std::move(s.bundle));
  return out;
}

}  // namespace avu

#include <doctest.h>

#include <cmath>
#include <set>

#include "avu/errors.hpp"
#include "avu/prompts.hpp"
#include "avu/synth.hpp"

using namespace avu;

namespace {

LatentScene one_event_scene() {
  LatentScene s;
  s.segments = 10;
  s.grid = 4;
  s.height = 64;
  s.width = 64;
  SceneEvent e;
  e.cls = 2;
  e.onset = 3;
  e.offset = 6;
  e.modality = Modality::kAV;
  e.patch = 1 * 4 + 2;
  e.radius = 0.5;
  s.events.push_back(e);
  return s;
}

// Second, independent derivation of the counting answer.
std::uint16_t count_oracle(const LatentScene& s) {
  std::set<std::size_t> sounding;
  for (const auto& e : s.events)
    if (e.modality == Modality::kA || e.modality == Modality::kAV) sounding.insert(e.cls);
  return sounding.size() == 1 ? answer::kOne : answer::kTwo;
}

}  // namespace

TEST_CASE("labels of a single noiseless event") {
  const LatentScene s = one_event_scene();
  const auto ave = std::get<AveLabels>(derive_labels(s, Task::kAVE, 0, 6).payload);
  CHECK(ave.classes == std::vector<std::uint8_t>{0, 0, 0, 2, 2, 2, 0, 0, 0, 0});
  const auto ssl = std::get<SslLabels>(derive_labels(s, Task::kSSL, 2, 6).payload);
  for (std::size_t t = 0; t < 10; ++t) CHECK(ssl.bins[t] == (t >= 3 && t < 6 ? 6 : SslLabels::kSilent));
  const auto avvp = std::get<AvvpLabels>(derive_labels(s, Task::kAVVP, 1, 6).payload);
  CHECK(avvp.audible(4, 2));
  CHECK(avvp.visible(4, 2));
  CHECK_FALSE(avvp.audible(6, 2));
}

TEST_CASE("noiseless rendering places prototypes") {
  SceneConfig c;
  c.sigma = 0.0;
  c.audio_dim = 8;
  c.visual_dim = 8;
  const Prototypes protos = make_prototypes(c);
  Rng noise(1);
  const FeatureBundle b = render_bundle(one_event_scene(), c, protos, Task::kAVE, 0, noise);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(b.audio[4 * 8 + j] == static_cast<float>(protos.audio[1][j]));
    CHECK(b.audio[0 * 8 + j] == 0.0f);
    CHECK(b.patch[(4 * 16 + 6) * 8 + j] == static_cast<float>(protos.visual[1][j]));
    CHECK(b.frame[4 * 8 + j] == doctest::Approx(protos.visual[1][j] / 16).epsilon(1e-6));
  }
  double norm = 0.0;
  for (double v : protos.audio[0]) norm += v * v;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("event disk is centred on its patch") {
  const LatentScene s = one_event_scene();
  const auto disk = event_disk(s, s.events[0]);
  // Patch (1, 2) of a 4x4 grid on 64x64: centre at (24, 40) in (row, col).
  CHECK(disk[24 * 64 + 40] == 1);
  CHECK(disk[0] == 0);
  std::size_t on = 0;
  for (auto v : disk) on += v;
  CHECK(on == doctest::Approx(M_PI * 8 * 8).epsilon(0.1));
}

TEST_CASE("sampled scenes satisfy the task constraints") {
  SceneConfig c;
  c.audio_dim = 8;
  c.visual_dim = 8;
  for (Task task : kAllTasks) {
    for (const auto& sample : synth_samples(c, 60, task, 5)) {
      const LatentScene& s = sample.scene;
      std::set<std::size_t> classes, patches;
      for (const auto& e : s.events) {
        CHECK(classes.insert(e.cls).second);
        CHECK(patches.insert(e.patch).second);
        CHECK(e.offset <= s.segments);
        CHECK(e.onset < e.offset);
      }
      for (std::size_t t = 0; t < s.segments; ++t) {
        std::size_t av = 0;
        for (const auto& e : s.events) av += e.modality == Modality::kAV && e.active(t) ? 1 : 0;
        CHECK(av <= 1);
      }
      const std::uint16_t pt = sample.bundle.labels.prompt_template;
      if (task == Task::kAVQA) {
        const PromptTemplate p = prompt_template(pt, c.num_classes);
        const auto got = std::get<AvqaLabels>(sample.bundle.labels.payload).answer;
        if (p.question == QuestionType::kCount) CHECK(got == count_oracle(s));
        if (p.question == QuestionType::kExist) {
          bool yes = false;
          for (const auto& e : s.events) yes = yes || (e.cls == p.cls && e.modality != Modality::kV);
          CHECK(got == (yes ? answer::kYes : answer::kNo));
        }
        if (p.question == QuestionType::kLocation) {
          std::size_t sounding = 0;
          for (const auto& e : s.events) {
            if (e.modality != Modality::kAV) continue;
            ++sounding;
            CHECK(got == quadrant_answer(e.patch, c.grid));
          }
          CHECK(sounding == 1);
        }
      } else {
        CHECK(pt == task_prompt_id(task));
      }
      if (task == Task::kAVS) {
        const auto& e = s.events.at(0);
        CHECK(e.modality == Modality::kAV);
        CHECK(e.offset - e.onset >= 5);
      }
    }
  }
}

TEST_CASE("generation is deterministic per stream") {
  SceneConfig c;
  c.audio_dim = 8;
  c.visual_dim = 8;
  const auto a = synth_generate(c, 5, Task::kAVVP, 9);
  const auto b = synth_generate(c, 5, Task::kAVVP, 9);
  const auto d = synth_generate(c, 5, Task::kAVVP, 10);
  for (std::size_t i = 0; i < 5; ++i) CHECK(encode_bundle(a[i]) == encode_bundle(b[i]));
  CHECK(encode_bundle(a[0]) != encode_bundle(d[0]));
}

TEST_CASE("scene config validation") {
  SceneConfig c;
  c.max_events = 40;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SceneConfig{};
  c.sigma = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

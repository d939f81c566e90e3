#pragma once

#include "avu/bundle.hpp"
#include "avu/rng.hpp"

namespace fixtures {

// Arbitrary valid label block for a task (not drawn from a scene).
inline avu::LabelBlock random_labels(avu::Task task, avu::Rng& rng, std::size_t t,
                                     std::size_t k, std::size_t m, std::size_t answers) {
  using namespace avu;
  LabelBlock lb;
  switch (task) {
    case Task::kAVE: {
      AveLabels l;
      l.num_classes = static_cast<std::uint16_t>(k);
      for (std::size_t i = 0; i < t; ++i) l.classes.push_back(static_cast<std::uint8_t>(rng.index(k + 1)));
      lb.payload = l;
      break;
    }
    case Task::kAVVP: {
      AvvpLabels l;
      l.num_classes = static_cast<std::uint16_t>(k);
      const double density = rng.uniform(0.0, 0.6);
      for (std::size_t i = 0; i < t * k; ++i) {
        l.audio.push_back(rng.bernoulli(density) ? 1 : 0);
        l.visual.push_back(rng.bernoulli(density) ? 1 : 0);
      }
      lb.payload = l;
      break;
    }
    case Task::kSSL: {
      SslLabels l;
      for (std::size_t i = 0; i < t; ++i)
        l.bins.push_back(rng.bernoulli(0.3) ? SslLabels::kSilent
                                            : static_cast<std::int32_t>(rng.index(m)));
      lb.payload = l;
      break;
    }
    case Task::kAVS:
      lb.payload = AvsLabels{1, {}};
      break;
    case Task::kAVQA:
      lb.payload = AvqaLabels{static_cast<std::uint16_t>(answers),
                              static_cast<std::uint16_t>(rng.index(answers))};
      break;
  }
  return lb;
}

// Field-wise equality of the payloads produced by the token codec.
inline bool same_payload(const avu::LabelBlock& a, const avu::LabelBlock& b) {
  using namespace avu;
  if (a.payload.index() != b.payload.index()) return false;
  if (auto* x = std::get_if<AveLabels>(&a.payload)) {
    const auto& y = std::get<AveLabels>(b.payload);
    return x->classes == y.classes && x->num_classes == y.num_classes;
  }
  if (auto* x = std::get_if<AvvpLabels>(&a.payload)) {
    const auto& y = std::get<AvvpLabels>(b.payload);
    return x->audio == y.audio && x->visual == y.visual && x->num_classes == y.num_classes;
  }
  if (auto* x = std::get_if<SslLabels>(&a.payload)) return x->bins == std::get<SslLabels>(b.payload).bins;
  if (auto* x = std::get_if<AvsLabels>(&a.payload)) return x->masks == std::get<AvsLabels>(b.payload).masks;
  if (auto* x = std::get_if<AvqaLabels>(&a.payload)) {
    const auto& y = std::get<AvqaLabels>(b.payload);
    return x->answer == y.answer && x->num_answers == y.num_answers;
  }
  return false;
}

}  // namespace fixtures

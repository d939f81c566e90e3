#include "avu/metrics.hpp"

#include <json.hpp>

#include "avu/errors.hpp"

namespace avu {

void Counts::add(bool predicted, bool truth) {
  if (predicted && truth) ++tp;
  else if (predicted) ++fp;
  else if (truth) ++fn;
}

void Counts::merge(const Counts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
}

double Counts::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double Counts::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double Counts::f1() const {
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double segment_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw ContractError("segment_accuracy: " + std::to_string(predicted.size()) +
                        " predictions for " + std::to_string(truth.size()) + " labels");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

namespace {

Counts pixel_counts(std::span<const std::uint8_t> p, std::span<const std::uint8_t> t,
                    const char* who) {
  if (p.size() != t.size()) {
    throw ShapeError(std::string(who) + ": masks of " + std::to_string(p.size()) + " and " +
                     std::to_string(t.size()) + " pixels");
  }
  Counts c;
  for (std::size_t i = 0; i < p.size(); ++i) c.add(p[i] != 0, t[i] != 0);
  return c;
}

}  // namespace

double mask_iou(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  const Counts c = pixel_counts(predicted, truth, "mask_iou");
  const std::size_t uni = c.tp + c.fp + c.fn;
  return uni == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(uni);
}

double mask_fscore(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                   double beta2) {
  const Counts c = pixel_counts(predicted, truth, "mask_fscore");
  if (c.tp + c.fp + c.fn == 0) return 1.0;
  if (c.tp == 0) return 0.0;
  const double p = c.precision();
  const double r = c.recall();
  return (1.0 + beta2) * p * r / (beta2 * p + r);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ContractError("mean of an empty set");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double ciou_at(std::span<const double> ious, double threshold) {
  if (ious.empty()) throw ContractError("ciou of an empty set");
  std::size_t hit = 0;
  for (double v : ious) hit += v >= threshold ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(ious.size());
}

double ciou_auc(std::span<const double> ious) {
  constexpr int kSteps = 20;
  double area = 0.0;
  double prev = ciou_at(ious, 0.0);
  for (int i = 1; i <= kSteps; ++i) {
    const double cur = ciou_at(ious, static_cast<double>(i) / kSteps);
    area += 0.5 * (prev + cur) / kSteps;
    prev = cur;
  }
  return area;
}

std::vector<std::uint8_t> binarize_logits(std::span<const double> logits) {
  std::vector<std::uint8_t> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] >= 0.0 ? 1 : 0;
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values) j["metrics"][k] = v;
  j["meta"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : meta) j["meta"][k] = v;
  return j.dump(2);
}

}  // namespace avu

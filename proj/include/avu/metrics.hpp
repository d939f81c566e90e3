#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace avu {

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  void add(bool predicted, bool truth);
  void merge(const Counts& o);
  double precision() const;  // 0 when nothing was predicted
  double recall() const;     // 0 when nothing is true
  double f1() const;         // 1 when there is nothing to find and nothing predicted
};

double segment_accuracy(std::span<const int> predicted, std::span<const int> truth);

// Binary masks of equal size. Two empty masks have IoU 1.
double mask_iou(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);
// F_beta on mask pixels; 1 for two empty masks, 0 when nothing overlaps.
double mask_fscore(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                   double beta2 = 0.3);
double mean(std::span<const double> values);
// Fraction of IoU values >= threshold.
double ciou_at(std::span<const double> ious, double threshold = 0.5);
// Trapezoid area under ciou_at over thresholds 0, 0.05, ..., 1.
double ciou_auc(std::span<const double> ious);

// Logits >= 0, i.e. sigmoid >= 0.5.
std::vector<std::uint8_t> binarize_logits(std::span<const double> logits);

// Named scalar metrics plus free-form metadata.
struct MetricReport {
  std::map<std::string, double> values;
  std::map<std::string, std::string> meta;
  std::string to_json() const;
};

}  // namespace avu

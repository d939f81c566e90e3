#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avu/gradcheck.hpp"

namespace avu {

// Small shapes so finite differences stay cheap.
struct GradSuiteConfig {
  std::size_t dim = 8;
  std::size_t heads = 2;
  std::size_t segments = 4;
  std::size_t grid = 2;
  std::size_t num_classes = 2;
  std::size_t mask_size = 8;
  double eps = 1e-5;
  double rel_tol = 1e-4;
  double abs_tol = 1e-6;
  double min_fraction = 0.95;
};

struct ModuleGradResult {
  std::string module;
  GradCompare compare;
  bool passed = false;
};

// Module names in suite order.
const std::vector<std::string>& gradient_suite_modules();

// Analytic vs central-difference gradients of every module's forward path,
// with respect to its inputs and parameters, for one seed.
std::vector<ModuleGradResult> gradient_suite(std::uint64_t seed,
                                             const GradSuiteConfig& config = {});

}  // namespace avu

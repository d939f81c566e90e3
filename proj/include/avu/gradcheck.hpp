#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "avu/tensor.hpp"

namespace avu {

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per element.
// `x` is perturbed in place and restored before returning.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  Tensor x, double eps = 1e-5);

struct GradCompare {
  std::size_t elements = 0;
  std::size_t rel_violations = 0;  // elements with relative error above tolerance
  std::size_t abs_violations = 0;  // of those, elements also above the absolute floor
  double max_rel = 0.0;
  double max_abs = 0.0;

  // Relative tolerance met on at least `min_fraction` of elements and every
  // remaining element within the absolute tolerance.
  bool passed(double min_fraction = 0.95) const;
  void merge(const GradCompare& other);
};

GradCompare compare_gradients(std::span<const double> analytic,
                              std::span<const double> numeric,
                              double rel_tol = 1e-4, double abs_tol = 1e-6);

// Backprop of `loss_fn()` versus finite differences for every tensor in `wrt`.
// Grads of `wrt` are cleared first.
GradCompare check_gradients(const std::function<Tensor()>& loss_fn,
                            std::vector<Tensor> wrt, double eps = 1e-5,
                            double rel_tol = 1e-4, double abs_tol = 1e-6);

}  // namespace avu

#include "avu/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "avu/errors.hpp"

namespace avu {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  Tensor x, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_difference_gradient: eps must be > 0");
  std::vector<double> out(x.numel());
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double orig = data[i];
    data[i] = orig + eps;
    const double up = f(x);
    data[i] = orig - eps;
    const double down = f(x);
    data[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericsError("finite_difference_gradient: non-finite objective at element " +
                          std::to_string(i));
    }
    out[i] = (up - down) / (2.0 * eps);
  }
  return Tensor::from(x.shape(), std::move(out));
}

bool GradCompare::passed(double min_fraction) const {
  if (abs_violations > 0) return false;
  if (elements == 0) return true;
  const double ok = static_cast<double>(elements - rel_violations) /
                    static_cast<double>(elements);
  return ok >= min_fraction;
}

void GradCompare::merge(const GradCompare& o) {
  elements += o.elements;
  rel_violations += o.rel_violations;
  abs_violations += o.abs_violations;
  max_rel = std::max(max_rel, o.max_rel);
  max_abs = std::max(max_abs, o.max_abs);
}

GradCompare compare_gradients(std::span<const double> analytic,
                              std::span<const double> numeric, double rel_tol,
                              double abs_tol) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError("compare_gradients: " + std::to_string(analytic.size()) +
                     " analytic vs " + std::to_string(numeric.size()) + " numeric");
  }
  GradCompare r;
  r.elements = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double abs_err = std::abs(a - n);
    const double denom = std::max(std::abs(a), std::abs(n));
    const double rel = denom > 0.0 ? abs_err / denom : 0.0;
    r.max_abs = std::max(r.max_abs, abs_err);
    r.max_rel = std::max(r.max_rel, rel);
    if (!(rel <= rel_tol)) {
      ++r.rel_violations;
      if (!(abs_err <= abs_tol)) ++r.abs_violations;
    }
  }
  return r;
}

GradCompare check_gradients(const std::function<Tensor()>& loss_fn,
                            std::vector<Tensor> wrt, double eps, double rel_tol,
                            double abs_tol) {
  for (auto& t : wrt) t.clear_grad();
  backprop(loss_fn());
  GradCompare total;
  for (auto& t : wrt) {
    const auto analytic = t.grad();
    const Tensor numeric = finite_difference_gradient(
        [&](const Tensor&) { return loss_fn().item(); }, t, eps);
    total.merge(compare_gradients(analytic, numeric.data(), rel_tol, abs_tol));
  }
  return total;
}

}  // namespace avu

#pragma once

#include <vector>

#include "avu/tensor.hpp"

namespace avu {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are owned here, one pair per
// parameter, in registration order.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  // Throws ContractError if any parameter has no gradient buffer.
  void step();
  void zero_grad();

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  long steps() const { return steps_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long steps_ = 0;
};

}  // namespace avu

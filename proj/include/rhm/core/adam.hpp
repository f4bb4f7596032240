#pragma once

#include <vector>

#include "rhm/core/tensor.hpp"

namespace rhm::core {

struct AdamConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam over a fixed, ordered parameter list. Moment buffers persist for the
/// lifetime of the optimizer; update order is the list order, so runs are
/// reproducible.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  /// One update. Every parameter must carry a grad (a step that never touched
  /// a parameter is a wiring bug, not a silent no-op).
  void step();
  /// Drop grads so the next backward starts from zero.
  void zero_grad();

  const std::vector<Tensor>& params() const { return params_; }
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace rhm::core

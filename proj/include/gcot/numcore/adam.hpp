#pragma once

#include <cstddef>
#include <vector>

#include "gcot/numcore/tensor.hpp"

namespace gcot::num {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  long step_count = 0;

  AdamState() = default;
  /// Zero moments shaped like params.
  AdamState(AdamHyper h, const std::vector<Tensor*>& params);
};

/// One bias-corrected Adam update of every parameter, in place.
/// Throws DimensionError when params, grads and moments disagree in count
/// or shape, and ConfigError for a negative learning rate.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace gcot::num

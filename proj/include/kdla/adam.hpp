#pragma once

#include <cstdint>
#include <vector>

#include "kdla/mlp.hpp"

namespace kdla {

struct AdamState {
  std::vector<std::vector<double>> first;   // one per tensor of MlpParams::tensors()
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const MlpParams& params);
};

/// One bias-corrected Adam update, in place. Throws NumericalError naming the offending
/// tensor when a gradient entry is not finite; params and state are left untouched then.
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, double lr);

/// Learning rate for `epoch` of `total`: lr_start for the first half, lr_end after.
double lr_drop_schedule(std::size_t epoch, std::size_t total, double lr_start, double lr_end);

}  // namespace kdla

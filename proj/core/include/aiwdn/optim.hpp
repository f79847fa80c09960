#pragma once

#include <vector>

#include "aiwdn/autodiff.hpp"

namespace aiwdn::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, parallel to the parameter list.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long timestep = 0;

  void init(const std::vector<Tensor*>& params);
};

// One bias-corrected Adam update from params[i]->grad. If any gradient entry
// is non-finite the step is skipped entirely and false is returned so the
// caller can flag the batch.
bool adam_step(const std::vector<Tensor*>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace aiwdn::ad

#pragma once

#include <cstdint>
#include <vector>

#include "medpred/nd/graph.hpp"

namespace medpred::nd {

struct AdamState {
  std::vector<Tensor> m;  // first moments, one per parameter
  std::vector<Tensor> v;  // second moments
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ParameterSet& params);
};

// One bias-corrected Adam update. Parameters flagged `decay` first receive
// weight_decay * value added to their gradient (L2 penalty as a gradient term).
void adam_step(ParameterSet& params, AdamState& state, double lr, double weight_decay);

}  // namespace medpred::nd

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "medpred/nd/graph.hpp"

namespace medpred::nd {

struct GradCheckOptions {
  double step = 1e-5;
  // Entries sampled per parameter; 0 checks every entry.
  std::size_t max_entries_per_param = 0;
  // Denominator floor: err = |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// `build_loss` must construct a deterministic scalar loss over `params` in the
// given graph (dropout off, fixed batch).
GradCheckReport grad_check(const std::function<Var(Graph&)>& build_loss, ParameterSet& params,
                           const GradCheckOptions& options = {});

}  // namespace medpred::nd

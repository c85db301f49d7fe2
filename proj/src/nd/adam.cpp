#include "medpred/nd/adam.hpp"

#include <cmath>

#include "medpred/error.hpp"

namespace medpred::nd {

AdamState AdamState::for_params(const ParameterSet& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

void adam_step(ParameterSet& params, AdamState& state, double lr, double weight_decay) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "Adam state does not match parameter set");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (p.grad.shape() != p.value.shape() || m.shape() != p.value.shape()) {
      throw Error(ErrorCode::ShapeMismatch, "gradient/moment shape mismatch for '" + p.name + "'");
    }
    const double wd = p.decay ? weight_decay : 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] + wd * p.value[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace medpred::nd

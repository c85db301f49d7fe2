#include "medpred/nd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "medpred/nd/rng.hpp"

namespace medpred::nd {

GradCheckReport grad_check(const std::function<Var(Graph&)>& build_loss, ParameterSet& params,
                           const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    Var loss = build_loss(g);
    params.zero_grad();
    g.backward(loss);
    for (const auto& p : params) analytic.push_back(p.grad);
  }

  auto eval = [&] {
    Graph g;
    return build_loss(g).value().item();
  };

  Rng rng(options.seed);
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    std::vector<std::size_t> entries(p.value.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_param && entries.size() > options.max_entries_per_param) {
      rng.shuffle(entries);
      entries.resize(options.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t i : entries) {
      const double orig = p.value[i];
      p.value[i] = orig + options.step;
      const double up = eval();
      p.value[i] = orig - options.step;
      const double down = eval();
      p.value[i] = orig;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double err = std::abs(a - numeric) / denom;
      ++report.checked;
      if (err > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = err;
        report.worst_param = p.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace medpred::nd

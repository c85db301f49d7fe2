#pragma once

#include <span>
#include <string>

#include "medpred/analysis.hpp"
#include "medpred/baselines.hpp"
#include "medpred/json_io.hpp"
#include "medpred/metrics.hpp"
#include "medpred/model.hpp"

// JSON forms of configs, training histories and reports. Readers start from
// the defaults and override only the keys present; unknown keys are errors.
namespace medpred {

namespace model {
void to_json(json& j, const CnnConfig& c);
void from_json(const json& j, CnnConfig& c);
json covariance_json(const CovarianceReport& r);
}  // namespace model

namespace baselines {
void to_json(json& j, const LrConfig& c);
void from_json(const json& j, LrConfig& c);
void to_json(json& j, const MlpConfig& c);
void from_json(const json& j, MlpConfig& c);
}  // namespace baselines

namespace analysis {
void to_json(json& j, const TsneConfig& c);
void from_json(const json& j, TsneConfig& c);
}  // namespace analysis

namespace nd {
void to_json(json& j, const EpochRecord& r);
void to_json(json& j, const LoopResult& r);
}  // namespace nd

namespace metrics {
json report_json(const MetricsReport& r);
json pmi_json(const PmiMatrix& p);
json rank_json(const RankComparison& r);
}  // namespace metrics

// {visit_id, probs[8], predicted[generic names]}
json prediction_json(const std::string& visit_id, std::span<const double> probs);

// Throws Error(Config) naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where);

}  // namespace medpred

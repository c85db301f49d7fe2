#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "medpred/medication.hpp"
#include "medpred/note_parser.hpp"

namespace medpred::metrics {

using notes::LabelVector;

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const Prf&) const = default;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const LabelVector> preds, std::span<const LabelVector> labels, std::size_t i);

// 0/0 is 0 for each of P, R and F.
Prf prf_from_counts(const Confusion& c);
Prf class_prf(std::span<const LabelVector> preds, std::span<const LabelVector> labels, std::size_t i);

// Frequency-weighted mean of class scores. All-zero frequencies give zeros.
Prf micro_average(std::span<const Prf> scores, std::span<const double> frequencies);
Prf macro_average(std::span<const Prf> scores);
// Standard micro average over summed confusion counts.
Prf pooled_micro(std::span<const Confusion> counts);

struct MetricsReport {
  std::size_t examples = 0;
  std::array<Prf, kNumMedications> per_class{};
  std::array<Confusion, kNumMedications> counts{};
  std::array<double, kNumMedications> frequencies{};  // positive labels per class
  Prf micro;
  Prf macro;
  Prf pooled_micro;
};

MetricsReport evaluate(std::span<const LabelVector> preds, std::span<const LabelVector> labels);

struct PmiMatrix {
  std::size_t examples = 0;
  std::array<std::size_t, kNumMedications> n{};
  std::array<std::array<std::size_t, kNumMedications>, kNumMedications> n_pair{};
  // Off-diagonal entries; nullopt when n(i,j) = 0. The diagonal is nullopt.
  std::array<std::array<std::optional<double>, kNumMedications>, kNumMedications> value{};
};

// ln(n(i,j) / (n(i) n(j))). With `normalized`, counts are divided by the number
// of examples first, i.e. ln(N n(i,j) / (n(i) n(j))); rankings are unaffected.
PmiMatrix pmi(std::span<const LabelVector> labels, bool normalized = false);

using ScoreMatrix = std::array<std::array<std::optional<double>, kNumMedications>, kNumMedications>;

ScoreMatrix to_score_matrix(const PmiMatrix& p);

struct MedicationRanking {
  // Other medications sorted by descending score; missing scores go last, then
  // ties by medication index.
  std::vector<std::pair<std::size_t, std::optional<double>>> corr_order;
  std::vector<std::pair<std::size_t, std::optional<double>>> pmi_order;
  bool top1_agree = false;
  std::optional<double> spearman;  // absent when either score list is constant
};

struct RankComparison {
  std::array<MedicationRanking, kNumMedications> per_medication;
  std::size_t top1_agreement = 0;
};

RankComparison rank_comparison(const ScoreMatrix& corr, const PmiMatrix& pmi);

// Spearman correlation with average ranks for ties. Missing entries rank below
// every present value and tie with each other.
std::optional<double> spearman(std::span<const std::optional<double>> a,
                               std::span<const std::optional<double>> b);

// --- tables ----------------------------------------------------------------

struct NamedReport {
  std::string model;
  MetricsReport report;
};

// Medication rows with P/R/F column triples per model, then Micro Avg and
// Macro Avg rows.
std::string f1_table_text(std::span<const NamedReport> reports);
std::string f1_table_csv(std::span<const NamedReport> reports);

// For each medication, the other seven ranked by CORR and by PMI.
std::string partner_table_text(const RankComparison& rc);
std::string partner_table_csv(const RankComparison& rc);

}  // namespace medpred::metrics

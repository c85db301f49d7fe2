#include "medpred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "medpred/error.hpp"

namespace medpred::metrics {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

void check_aligned(std::span<const LabelVector> preds, std::span<const LabelVector> labels) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "predictions and labels differ in length");
  }
}

}  // namespace

Confusion confusion(std::span<const LabelVector> preds, std::span<const LabelVector> labels, std::size_t i) {
  check_aligned(preds, labels);
  Confusion c;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    const bool p = preds[r][i] != 0, l = labels[r][i] != 0;
    if (p && l) ++c.tp;
    else if (p) ++c.fp;
    else if (l) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Prf prf_from_counts(const Confusion& c) {
  Prf s;
  s.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  s.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
  return s;
}

Prf class_prf(std::span<const LabelVector> preds, std::span<const LabelVector> labels, std::size_t i) {
  return prf_from_counts(confusion(preds, labels, i));
}

Prf micro_average(std::span<const Prf> scores, std::span<const double> frequencies) {
  if (scores.size() != frequencies.size()) throw Error(ErrorCode::ShapeMismatch, "scores/frequencies");
  double total = 0.0;
  Prf out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    total += frequencies[i];
    out.precision += frequencies[i] * scores[i].precision;
    out.recall += frequencies[i] * scores[i].recall;
    out.f1 += frequencies[i] * scores[i].f1;
  }
  if (total == 0.0) return {};
  out.precision /= total;
  out.recall /= total;
  out.f1 /= total;
  return out;
}

Prf macro_average(std::span<const Prf> scores) {
  Prf out;
  if (scores.empty()) return out;
  for (const auto& s : scores) {
    out.precision += s.precision;
    out.recall += s.recall;
    out.f1 += s.f1;
  }
  const double n = static_cast<double>(scores.size());
  out.precision /= n;
  out.recall /= n;
  out.f1 /= n;
  return out;
}

Prf pooled_micro(std::span<const Confusion> counts) {
  Confusion total;
  for (const auto& c : counts) {
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
    total.tn += c.tn;
  }
  return prf_from_counts(total);
}

MetricsReport evaluate(std::span<const LabelVector> preds, std::span<const LabelVector> labels) {
  check_aligned(preds, labels);
  MetricsReport r;
  r.examples = preds.size();
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    r.counts[i] = confusion(preds, labels, i);
    r.per_class[i] = prf_from_counts(r.counts[i]);
    r.frequencies[i] = static_cast<double>(r.counts[i].tp + r.counts[i].fn);
  }
  r.micro = micro_average(r.per_class, r.frequencies);
  r.macro = macro_average(r.per_class);
  r.pooled_micro = pooled_micro(r.counts);
  return r;
}

PmiMatrix pmi(std::span<const LabelVector> labels, bool normalized) {
  PmiMatrix m;
  m.examples = labels.size();
  for (const auto& l : labels) {
    for (std::size_t i = 0; i < kNumMedications; ++i) {
      if (!l[i]) continue;
      ++m.n[i];
      for (std::size_t j = 0; j < kNumMedications; ++j) {
        if (j != i && l[j]) ++m.n_pair[i][j];
      }
    }
  }
  const double N = static_cast<double>(m.examples);
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    for (std::size_t j = 0; j < kNumMedications; ++j) {
      if (i == j || m.n_pair[i][j] == 0) continue;
      double r = static_cast<double>(m.n_pair[i][j]) /
                 (static_cast<double>(m.n[i]) * static_cast<double>(m.n[j]));
      if (normalized) r *= N;
      m.value[i][j] = std::log(r);
    }
  }
  return m;
}

ScoreMatrix to_score_matrix(const PmiMatrix& p) { return p.value; }

namespace {

std::vector<double> average_ranks(std::span<const std::optional<double>> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Missing values compare below everything.
  auto less = [&](std::size_t a, std::size_t b) {
    if (!v[a]) return v[b].has_value();
    if (!v[b]) return false;
    return *v[a] < *v[b];
  };
  std::stable_sort(order.begin(), order.end(), less);
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && !less(order[i], order[j + 1]) && !less(order[j + 1], order[i])) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::vector<std::pair<std::size_t, std::optional<double>>> descending(const ScoreMatrix& m, std::size_t i) {
  std::vector<std::pair<std::size_t, std::optional<double>>> out;
  for (std::size_t j = 0; j < kNumMedications; ++j) {
    if (j != i) out.emplace_back(j, m[i][j]);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second.has_value() != b.second.has_value()) return a.second.has_value();
    if (a.second && *a.second != *b.second) return *a.second > *b.second;
    return a.first < b.first;
  });
  return out;
}

}  // namespace

std::optional<double> spearman(std::span<const std::optional<double>> a,
                               std::span<const std::optional<double>> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "spearman inputs differ in length");
  if (a.size() < 2) return std::nullopt;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

RankComparison rank_comparison(const ScoreMatrix& corr, const PmiMatrix& p) {
  RankComparison rc;
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    auto& m = rc.per_medication[i];
    m.corr_order = descending(corr, i);
    m.pmi_order = descending(p.value, i);
    m.top1_agree = m.corr_order.front().second.has_value() && m.pmi_order.front().second.has_value() &&
                   m.corr_order.front().first == m.pmi_order.front().first;
    std::vector<std::optional<double>> a, b;
    for (std::size_t j = 0; j < kNumMedications; ++j) {
      if (j == i) continue;
      a.push_back(corr[i][j]);
      b.push_back(p.value[i][j]);
    }
    m.spearman = spearman(a, b);
    rc.top1_agreement += m.top1_agree;
  }
  return rc;
}

// --- tables ----------------------------------------------------------------

std::string f1_table_text(std::span<const NamedReport> reports) {
  constexpr std::size_t kName = 12, kCell = 6;
  std::string out = pad("", kName);
  for (const auto& r : reports) out += "| " + pad(r.model, 3 * kCell);
  out += "\n" + pad("Medication", kName);
  for (std::size_t k = 0; k < reports.size(); ++k) out += "| " + pad("P", kCell) + pad("R", kCell) + pad("F", kCell);
  out += "\n";
  auto row = [&](const std::string& name, auto get) {
    std::string line = pad(name, kName);
    for (const auto& r : reports) {
      const Prf s = get(r.report);
      line += "| " + pad(fmt2(s.precision), kCell) + pad(fmt2(s.recall), kCell) + pad(fmt2(s.f1), kCell);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  };
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    row(std::string(kMedicationDisplayNames[i]), [i](const MetricsReport& m) { return m.per_class[i]; });
  }
  row("Micro Avg", [](const MetricsReport& m) { return m.micro; });
  row("Macro Avg", [](const MetricsReport& m) { return m.macro; });
  row("Pooled Micro", [](const MetricsReport& m) { return m.pooled_micro; });
  return out;
}

std::string f1_table_csv(std::span<const NamedReport> reports) {
  std::string out = "model,row,precision,recall,f1,support\n";
  for (const auto& r : reports) {
    auto line = [&](const std::string& name, const Prf& s, double support) {
      out += r.model + "," + name + "," + fmt6(s.precision) + "," + fmt6(s.recall) + "," + fmt6(s.f1) + "," +
             std::to_string(static_cast<long long>(support)) + "\n";
    };
    double total = 0;
    for (std::size_t i = 0; i < kNumMedications; ++i) {
      line(std::string(kMedicationDisplayNames[i]), r.report.per_class[i], r.report.frequencies[i]);
      total += r.report.frequencies[i];
    }
    line("micro", r.report.micro, total);
    line("macro", r.report.macro, total);
    line("pooled_micro", r.report.pooled_micro, total);
  }
  return out;
}

namespace {

std::string score_or_dash(const std::optional<double>& v) { return v ? fmt2(*v) : "-"; }

}  // namespace

std::string partner_table_text(const RankComparison& rc) {
  std::string out;
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    const auto& m = rc.per_medication[i];
    out += std::string(kMedicationDisplayNames[i]) + "  (top-1 " + (m.top1_agree ? "agrees" : "differs") +
           ", spearman " + (m.spearman ? fmt2(*m.spearman) : std::string("-")) + ")\n";
    out += "  " + pad("CORR", 22) + "PMI\n";
    for (std::size_t r = 0; r < m.corr_order.size(); ++r) {
      const auto& [cj, cv] = m.corr_order[r];
      const auto& [pj, pv] = m.pmi_order[r];
      out += "  " + pad(std::string(kMedicationDisplayNames[cj]), 14) + pad(score_or_dash(cv), 8) +
             pad(std::string(kMedicationDisplayNames[pj]), 14) + score_or_dash(pv) + "\n";
    }
    out += "\n";
  }
  out += "top-1 agreement: " + std::to_string(rc.top1_agreement) + "/" + std::to_string(kNumMedications) + "\n";
  return out;
}

std::string partner_table_csv(const RankComparison& rc) {
  std::string out = "medication,rank,corr_partner,corr,pmi_partner,pmi\n";
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    const auto& m = rc.per_medication[i];
    for (std::size_t r = 0; r < m.corr_order.size(); ++r) {
      const auto& [cj, cv] = m.corr_order[r];
      const auto& [pj, pv] = m.pmi_order[r];
      out += std::string(kMedicationNames[i]) + "," + std::to_string(r + 1) + "," +
             std::string(kMedicationNames[cj]) + "," + (cv ? fmt6(*cv) : "") + "," +
             std::string(kMedicationNames[pj]) + "," + (pv ? fmt6(*pv) : "") + "\n";
    }
  }
  return out;
}

}  // namespace medpred::metrics

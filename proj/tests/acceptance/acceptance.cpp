// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)
// Exit status is 1 when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "medpred/analysis.hpp"
#include "medpred/corpus.hpp"
#include "medpred/error.hpp"
#include "medpred/json_io.hpp"
#include "medpred/metrics.hpp"
#include "medpred/model.hpp"
#include "medpred/nd/grad_check.hpp"
#include "medpred/pipeline.hpp"

#ifndef MEDPRED_SOURCE_DIR
#define MEDPRED_SOURCE_DIR "."
#endif

using namespace medpred;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("medpred_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double test_macro_f1(const model::CnnModel& m, const std::vector<corpus::EncodedExample>& test) {
  std::vector<notes::LabelVector> preds, labels;
  const auto traces = m.infer_examples(test);
  for (std::size_t i = 0; i < test.size(); ++i) {
    preds.push_back(model::predict(traces[i].probs));
    labels.push_back(test[i].labels);
  }
  return metrics::evaluate(preds, labels).macro.f1;
}

// 1. analytic vs central-difference gradients on a tiny CNN
Outcome gradient_check() {
  const auto t0 = Clock::now();
  model::CnnConfig c;
  c.embed_dim = 8;
  c.filters_per_window = 2;
  c.dense_units = 6;
  c.num_labels = 3;
  c.keep_rate = 1.0;
  model::CnnModel m(c, 50, 1);
  nd::Rng rng(2);
  for (auto& p : m.params())
    for (double& v : p.value.data()) v = rng.uniform(-0.5, 0.5);
  std::vector<corpus::EncodedExample> ex(4);
  for (auto& e : ex) {
    e.length = 6 + rng.index(6);
    e.token_indices.assign(12, corpus::kPadIndex);
    for (std::size_t i = 0; i < e.length; ++i) e.token_indices[i] = static_cast<std::int32_t>(1 + rng.index(49));
    for (std::size_t j = 0; j < c.num_labels; ++j) e.labels[j] = rng.bernoulli(0.5);
  }
  const std::vector<std::size_t> rows = {0, 1, 2, 3};
  const auto batch = model::make_sequence_batch(ex, rows);
  nd::Tensor labels({rows.size(), c.num_labels});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < c.num_labels; ++j) labels[i * c.num_labels + j] = ex[i].labels[j];
  const auto bn0 = m.bn_states();
  nd::GradCheckOptions opt;
  opt.step = 1e-5;
  const auto r = nd::grad_check(
      [&](nd::Graph& g) {
        m.bn_states() = bn0;
        nd::Rng dropout(0);
        return m.loss_batch(g, batch, labels, nd::Mode::Train, dropout, true);
      },
      m.params(), opt);
  const double secs = seconds_since(t0);
  const bool all = r.checked == m.params().scalar_count();
  return pass_if(r.max_rel_error < 1e-4 && secs < 60.0 && all,
                 fmt("max relative error %.2e over %zu entries (worst %s[%zu]), %.1f s", r.max_rel_error, r.checked,
                     r.worst_param.c_str(), r.worst_index, secs));
}

// 2. zero weights give 8 ln 2 per example
Outcome loss_anchor() {
  model::CnnConfig c;
  model::CnnModel m(c, 60, 3);
  for (auto& p : m.params()) p.value.fill(0.0);
  nd::Rng rng(4);
  std::vector<corpus::EncodedExample> ex(5);
  for (auto& e : ex) {
    e.length = 8 + rng.index(8);
    e.token_indices.assign(20, corpus::kPadIndex);
    for (std::size_t i = 0; i < e.length; ++i) e.token_indices[i] = static_cast<std::int32_t>(1 + rng.index(59));
    for (auto& l : e.labels) l = rng.bernoulli(0.4);
  }
  const double target = 8.0 * std::numbers::ln2;
  double worst = 0.0;
  for (const auto& t : m.infer_examples(ex)) {
    double loss = 0.0;
    for (double y : t.logits) loss += std::max(y, 0.0) + std::log1p(std::exp(-std::abs(y)));
    worst = std::max(worst, std::abs(loss - target));
  }
  const std::vector<std::size_t> rows = {0, 1, 2, 3, 4};
  nd::Tensor labels({rows.size(), 8});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < 8; ++j) labels[i * 8 + j] = ex[i].labels[j];
  nd::Graph g;
  const double batch_loss =
      m.loss_batch(g, model::make_sequence_batch(ex, rows), labels, nd::Mode::Infer, rng, true).value()[0];
  worst = std::max(worst, std::abs(batch_loss - target));
  return pass_if(worst <= 1e-9, fmt("|loss - 8 ln 2| <= %.1e (batch loss %.15f)", worst, batch_loss));
}

// 3. learnability on the 2000-note trigger corpus
Outcome learnability() {
  const auto t0 = Clock::now();
  corpus::SyntheticSpec spec;  // 2000 notes, one deterministic trigger per medication
  const auto ds = corpus::build_dataset(corpus::generate_synthetic_corpus(spec, 1), {}, 1);
  model::CnnConfig c;  // defaults except dropout; see README
  c.keep_rate = 1.0;
  c.max_epochs = 10;
  model::CnnModel m(c, ds.vocab.size(), 1);
  const auto r = m.train(ds.split, 1);
  const double f1 = test_macro_f1(m, ds.split.test);
  const double secs = seconds_since(t0);
  // for the record: the same run with the default dropout (not part of the verdict)
  model::CnnConfig d;
  d.max_epochs = 10;
  model::CnnModel md(d, ds.vocab.size(), 1);
  md.train(ds.split, 1);
  const double f1_default = test_macro_f1(md, ds.split.test);
  return pass_if(f1 >= 0.95 && secs < 300.0 && !r.loop.history.empty() && r.loop.history.size() <= 10,
                 fmt("test macro-F1 %.4f after %zu epochs (best %d), %.0f s end to end, keep_rate 1.0; "
                     "default keep_rate %.1f gives %.4f",
                     f1, r.loop.history.size(), r.loop.best_epoch, secs, d.keep_rate, f1_default));
}

// 4. learned correlations vs PMI on a corpus where meds 2 and 3 co-occur
Outcome correlation_capture() {
  corpus::SyntheticSpec spec;
  for (auto& med : spec.medications) med.rate = 0.3;
  spec.medications[2].rate = spec.medications[3].rate = 0.0;
  spec.groups.push_back({{2, 3}, 0.32, 0.9});
  spec.tokens_min = spec.tokens_max = 60;
  const auto ds = corpus::build_dataset(corpus::generate_synthetic_corpus(spec, 1), {}, 1);
  model::CnnConfig c;
  c.keep_rate = 1.0;
  c.max_epochs = 10;
  model::CnnModel m(c, ds.vocab.size(), 1);
  m.train(ds.split, 1);

  std::vector<notes::LabelVector> labels;
  double either = 0, both = 0;
  for (const auto& e : ds.split.train) {
    labels.push_back(e.labels);
    either += e.labels[2] || e.labels[3];
    both += e.labels[2] && e.labels[3];
  }
  const auto cov = m.medication_covariance(ds.split.train);
  metrics::ScoreMatrix corr{};
  for (std::size_t i = 0; i < kNumMedications; ++i)
    for (std::size_t j = 0; j < kNumMedications; ++j) corr[i][j] = cov.corr[i][j];
  const auto rc = metrics::rank_comparison(corr, metrics::pmi(labels));
  const std::size_t top2 = rc.per_medication[2].corr_order.front().first;
  const std::size_t top3 = rc.per_medication[3].corr_order.front().first;
  // ceiling: the same comparison with correlations taken straight from the labels
  metrics::ScoreMatrix label_corr{};
  const double n = static_cast<double>(labels.size());
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    for (std::size_t j = 0; j < kNumMedications; ++j) {
      double a = 0, b = 0, ab = 0;
      for (const auto& l : labels) {
        a += l[i];
        b += l[j];
        ab += l[i] && l[j];
      }
      a /= n, b /= n, ab /= n;
      label_corr[i][j] = (ab - a * b) / std::sqrt(a * (1 - a) * b * (1 - b));
    }
  }
  const std::size_t ceiling = metrics::rank_comparison(label_corr, metrics::pmi(labels)).top1_agreement;
  std::string misses;
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    if (!rc.per_medication[i].top1_agree) misses += " " + std::string(kMedicationNames[i]);
  }
  return pass_if(top2 == 3 && top3 == 2 && rc.top1_agreement >= 7,
                 fmt("P(both|either) %.3f; corr(2,3) %.3f; top partner of 2 is %zu, of 3 is %zu; "
                     "CORR/PMI top-1 agreement %zu/8%s%s (label-correlation ceiling %zu/8)",
                     both / either, corr[2][3].value_or(NAN), top2, top3, rc.top1_agreement,
                     misses.empty() ? "" : "; differs for", misses.c_str(), ceiling));
}

// 5. metrics against a brute-force confusion computation; a reference F1 row
Outcome metrics_oracle() {
  nd::Rng rng(5);
  std::vector<notes::LabelVector> preds(1000), labels(1000);
  for (std::size_t r = 0; r < 1000; ++r) {
    for (std::size_t i = 0; i < kNumMedications; ++i) {
      labels[r][i] = rng.bernoulli(0.05 + 0.1 * static_cast<double>(i));
      preds[r][i] = rng.bernoulli(0.5) ? labels[r][i] : rng.bernoulli(0.3);
    }
  }
  auto safe = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
  std::array<metrics::Prf, kNumMedications> brute{};
  std::array<double, kNumMedications> freq{};
  bool exact = true;
  const auto rep = metrics::evaluate(preds, labels);
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < 1000; ++r) {
      tp += preds[r][i] && labels[r][i];
      fp += preds[r][i] && !labels[r][i];
      fn += !preds[r][i] && labels[r][i];
    }
    const double p = safe(tp, tp + fp), rc = safe(tp, tp + fn);
    brute[i] = {p, rc, safe(2 * p * rc, p + rc)};
    freq[i] = tp + fn;
    const auto got = metrics::class_prf(preds, labels, i);
    exact = exact && got.precision == p && got.recall == rc && got.f1 == brute[i].f1;
    exact = exact && rep.per_class[i].f1 == brute[i].f1;
  }
  metrics::Prf micro{}, macro{};
  double total = 0;
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    total += freq[i];
    micro.precision += freq[i] * brute[i].precision;
    micro.recall += freq[i] * brute[i].recall;
    micro.f1 += freq[i] * brute[i].f1;
    macro.precision += brute[i].precision;
    macro.recall += brute[i].recall;
    macro.f1 += brute[i].f1;
  }
  for (double* v : {&micro.precision, &micro.recall, &micro.f1}) *v /= total;
  for (double* v : {&macro.precision, &macro.recall, &macro.f1}) *v /= kNumMedications;
  const auto lib_micro = metrics::micro_average(brute, freq);
  const auto lib_macro = metrics::macro_average(brute);
  const double tol = 1e-12;  // accumulation order may differ
  const bool avg = std::abs(lib_micro.f1 - micro.f1) < tol && std::abs(lib_micro.precision - micro.precision) < tol &&
                   std::abs(lib_micro.recall - micro.recall) < tol && std::abs(lib_macro.f1 - macro.f1) < tol &&
                   std::abs(lib_macro.precision - macro.precision) < tol &&
                   std::abs(lib_macro.recall - macro.recall) < tol && rep.macro.f1 == lib_macro.f1;

  const std::array<double, 8> cnn_f1 = {0.79, 0.70, 0.53, 0.49, 0.32, 0.26, 0.46, 0.57};
  std::vector<metrics::Prf> row;
  for (double f : cnn_f1) row.push_back({0, 0, f});
  const double row_macro = metrics::macro_average(row).f1;
  // 0.515 sits exactly on the bound; allow for its binary representation
  const bool anchor = std::abs(row_macro - 0.52) <= 0.005 + 1e-12 && std::round(row_macro * 100) == 52;
  return pass_if(exact && avg && anchor,
                 fmt("class P/R/F exact: %s; micro/macro within 1e-12: %s; reference row macro %.4f vs 0.52",
                     exact ? "yes" : "no", avg ? "yes" : "no", row_macro));
}

// 6. PMI against naive pair counting
Outcome pmi_oracle() {
  nd::Rng rng(6);
  bool ok = true;
  std::size_t compared = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<notes::LabelVector> labels(5 + rng.index(20));
    for (auto& l : labels)
      for (auto& b : l) b = rng.bernoulli(0.4);
    const auto p = metrics::pmi(labels);
    for (std::size_t i = 0; i < kNumMedications; ++i) {
      for (std::size_t j = 0; j < kNumMedications; ++j) {
        if (i == j) continue;
        double ni = 0, nj = 0, nij = 0;
        for (const auto& l : labels) {
          ni += l[i];
          nj += l[j];
          nij += l[i] && l[j];
        }
        if (nij == 0) {
          ok = ok && !p.value[i][j].has_value();
        } else {
          ok = ok && p.value[i][j].has_value() && *p.value[i][j] == std::log(nij / (ni * nj));
          ++compared;
        }
      }
    }
  }
  return pass_if(ok && compared > 0, fmt("%zu defined entries equal ln(n(i,j)/(n(i)n(j))) exactly", compared));
}

// 7. hand-written parser fixtures
Outcome parser_fixtures() {
  const fs::path file = fs::path(MEDPRED_SOURCE_DIR) / "tests/fixtures/parser_notes.jsonl";
  const auto rows = parse_jsonl(read_file(file));
  std::size_t sections_ok = 0, labels_ok = 0;
  std::string bad;
  for (const auto& row : rows) {
    const auto parsed = notes::parse_note(row.get<notes::RawNote>());
    const auto& expect = row.at("expect");
    bool s_ok = false, l_ok = false;
    if (parsed) {
      std::map<std::string, std::string> got;
      for (const auto& [type, body] : parsed->sections) got[std::string(notes::section_type_name(type))] = body;
      s_ok = got == expect.at("sections").get<std::map<std::string, std::string>>();
      std::vector<int> labels(parsed->labels.begin(), parsed->labels.end());
      l_ok = labels == expect.at("labels").get<std::vector<int>>();
    }
    sections_ok += s_ok;
    labels_ok += l_ok;
    if (!s_ok || !l_ok) bad += " " + row.at("visit_id").get<std::string>();
  }
  return pass_if(rows.size() == 20 && sections_ok == rows.size() && labels_ok == rows.size(),
                 fmt("%zu fixtures: sections %zu/%zu, labels %zu/%zu%s%s", rows.size(), sections_ok, rows.size(),
                     labels_ok, rows.size(), bad.empty() ? "" : "; wrong:", bad.c_str()));
}

// 8. t-SNE on a two-cluster Gaussian mixture
Outcome tsne_sanity() {
  nd::Rng rng(8);
  std::vector<std::vector<double>> X(100, std::vector<double>(10));
  for (std::size_t i = 0; i < 100; ++i)
    for (auto& v : X[i]) v = rng.normal() + (i < 50 ? 0.0 : 6.0);
  analysis::TsneConfig cfg;
  cfg.seed = 3;
  const auto a = analysis::tsne(X, cfg);
  const auto b = analysis::tsne(X, cfg);
  double intra = 0, inter = 0;
  std::size_t ni = 0, nx = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t j = i + 1; j < 100; ++j) {
      const double d = std::hypot(a.Y[i][0] - a.Y[j][0], a.Y[i][1] - a.Y[j][1]);
      if ((i < 50) == (j < 50)) {
        intra += d;
        ++ni;
      } else {
        inter += d;
        ++nx;
      }
    }
  }
  intra /= static_cast<double>(ni);
  inter /= static_cast<double>(nx);
  const bool same = a.Y == b.Y && a.kl_final == b.kl_final;
  return pass_if(a.kl_final < a.kl_initial && intra < inter && same,
                 fmt("KL %.4f -> %.4f; mean distance intra %.3f, inter %.3f; repeat run identical: %s", a.kl_initial,
                     a.kl_final, intra, inter, same ? "yes" : "no"));
}

// 9. two full pipeline runs give identical reports
Outcome reproducibility() {
  auto make = [](const fs::path& out) {
    pipeline::RunConfig c = pipeline::load_config(fs::path(MEDPRED_SOURCE_DIR) / "configs/smoke.json");
    c.output_dir = out.string();
    return c;
  };
  const auto ca = make(scratch("repro_a")), cb = make(scratch("repro_b"));
  const json ma = pipeline::run_all(ca);
  const json mb = pipeline::run_all(cb);
  std::size_t files = 0, same = 0;
  for (auto seed : ca.seeds) {
    for (const char* f : {"eval_test/metrics.json", "eval_test/predictions.jsonl", "eval_test/covariance.json",
                          "eval_test/rank_comparison.json", "model.ckpt", "analysis/filter_ngrams.csv",
                          "analysis/tsne.csv"}) {
      const fs::path pa = pipeline::seed_dir(ca, seed) / f, pb = pipeline::seed_dir(cb, seed) / f;
      if (!fs::exists(pa)) continue;
      ++files;
      same += slurp(pa) == slurp(pb);
    }
  }
  const bool agg = ma.at("aggregate").dump() == mb.at("aggregate").dump();
  return pass_if(files > 0 && same == files && agg,
                 fmt("%zu/%zu per-seed output files byte-identical over %zu seeds; aggregate identical: %s", same,
                     files, ca.seeds.size(), agg ? "yes" : "no"));
}

// 10. real notes (optional)
Outcome mimic() {
  const char* path = std::getenv("MEDPRED_MIMIC_NOTES");
  if (!path || !*path) return {Status::Skip, "set MEDPRED_MIMIC_NOTES to a parsed-notes JSONL file to run"};
  pipeline::RunConfig c;
  c.input = path;
  c.output_dir = scratch("mimic").string();
  c.seeds = {1};
  if (const char* s = std::getenv("MEDPRED_MIMIC_SEEDS")) {
    c.seeds.clear();
    for (std::istringstream in(s); in;) {
      std::uint64_t v;
      if (in >> v) c.seeds.push_back(v);
    }
  }
  c.analysis.tsne = false;
  c.model = pipeline::ModelKind::Cnn;
  const json cnn = pipeline::run_all(c).at("aggregate").at("mean");
  c.model = pipeline::ModelKind::Lr;
  c.output_dir = scratch("mimic_lr").string();
  const json lr = pipeline::run_all(c).at("aggregate").at("mean");
  const double macro = cnn.at("macro.f1"), micro = cnn.at("micro.f1"), lr_macro = lr.at("macro.f1");
  return pass_if(macro >= 0.45 && micro >= 0.58 && macro > lr_macro,
                 fmt("CNN macro-F1 %.3f (>= 0.45), micro-F1 %.3f (>= 0.58), LR macro-F1 %.3f, %zu seed(s)", macro,
                     micro, lr_macro, c.seeds.size()));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_check},
      {"loss anchor", loss_anchor},
      {"learnability", learnability},
      {"correlation capture", correlation_capture},
      {"metrics oracle", metrics_oracle},
      {"PMI oracle", pmi_oracle},
      {"parser fixtures", parser_fixtures},
      {"t-SNE sanity", tsne_sanity},
      {"reproducibility", reproducibility},
      {"real-data performance", mimic},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    std::printf("criterion %2d %s  %s: %s\n", id, tag, criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
    failed += o.status == Status::Fail;
  }
  return failed ? 1 : 0;
}

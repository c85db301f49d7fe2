#include <doctest.h>

#include <cmath>
#include <random>

#include "medpred/metrics.hpp"

using namespace medpred;
using namespace medpred::metrics;

namespace {

LabelVector random_bits(std::mt19937& gen, double p) {
  std::bernoulli_distribution b(p);
  LabelVector v{};
  for (auto& x : v) x = b(gen);
  return v;
}

}  // namespace

TEST_CASE("class_prf") {
  std::vector<LabelVector> labels(5, LabelVector{}), preds(5, LabelVector{});
  labels[0][0] = labels[1][0] = 1;
  CHECK(class_prf(labels, labels, 0) == Prf{1, 1, 1});
  CHECK(class_prf(preds, labels, 0) == Prf{0, 0, 0});

  Confusion c{3, 1, 2, 0};
  Prf s = prf_from_counts(c);
  CHECK(s.precision == 0.75);
  CHECK(s.recall == 0.6);
  CHECK(s.f1 == doctest::Approx(2 * 0.45 / 1.35));
  CHECK(s.f1 == doctest::Approx(0.667).epsilon(1e-3));
}

TEST_CASE("averages") {
  std::vector<Prf> eq = {{0.5, 0.2, 0.8}, {0.1, 0.9, 0.4}, {0.3, 0.3, 0.3}};
  std::vector<double> ones(3, 1.0);
  CHECK(micro_average(eq, ones) == macro_average(eq));

  std::vector<Prf> two = {{0, 0, 0.8}, {0, 0, 0.4}};
  std::vector<double> freq = {3, 1};
  CHECK(micro_average(two, freq).f1 == doctest::Approx(0.7));
  std::vector<Prf> single = {{0.2, 0.4, 0.6}};
  std::vector<double> f1 = {5};
  CHECK(micro_average(single, f1) == single[0]);

  std::vector<Prf> same(8, Prf{0.4, 0.4, 0.4});
  CHECK(macro_average(same).f1 == doctest::Approx(0.4));
  std::vector<Prf> one_hot(8);
  one_hot[0] = {1, 1, 1};
  CHECK(macro_average(one_hot).f1 == 0.125);

  const double table_f1[] = {0.79, 0.70, 0.53, 0.49, 0.32, 0.26, 0.46, 0.57};
  std::vector<Prf> cnn;
  for (double f : table_f1) cnn.push_back({0, 0, f});
  const double macro = macro_average(cnn).f1;
  CHECK(macro == doctest::Approx(0.515));
  CHECK(std::abs(macro - 0.52) <= 0.005 + 1e-12);
}

TEST_CASE("evaluate matches brute-force confusion counting") {
  std::mt19937 gen(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<LabelVector> preds, labels;
    for (int r = 0; r < 1000; ++r) {
      preds.push_back(random_bits(gen, 0.3));
      labels.push_back(random_bits(gen, 0.25));
    }
    auto rep = evaluate(preds, labels);
    double wsum[3] = {0, 0, 0}, fsum = 0, msum[3] = {0, 0, 0};
    double TP = 0, FP = 0, FN = 0;
    for (std::size_t i = 0; i < kNumMedications; ++i) {
      double tp = 0, fp = 0, fn = 0, tn = 0;
      for (std::size_t r = 0; r < preds.size(); ++r) {
        tp += preds[r][i] && labels[r][i];
        fp += preds[r][i] && !labels[r][i];
        fn += !preds[r][i] && labels[r][i];
        tn += !preds[r][i] && !labels[r][i];
      }
      CHECK(tp + fp + fn + tn == 1000);
      const double P = tp + fp ? tp / (tp + fp) : 0, R = tp + fn ? tp / (tp + fn) : 0;
      const double F = P + R ? 2 * P * R / (P + R) : 0;
      CHECK(rep.per_class[i].precision == P);
      CHECK(rep.per_class[i].recall == R);
      CHECK(rep.per_class[i].f1 == F);
      const double freq = tp + fn;
      wsum[0] += freq * P, wsum[1] += freq * R, wsum[2] += freq * F, fsum += freq;
      msum[0] += P, msum[1] += R, msum[2] += F;
      TP += tp, FP += fp, FN += fn;
    }
    CHECK(rep.micro.precision == wsum[0] / fsum);
    CHECK(rep.micro.recall == wsum[1] / fsum);
    CHECK(rep.micro.f1 == wsum[2] / fsum);
    CHECK(rep.macro.precision == msum[0] / 8);
    CHECK(rep.macro.recall == msum[1] / 8);
    CHECK(rep.macro.f1 == msum[2] / 8);
    CHECK(rep.pooled_micro.precision == TP / (TP + FP));
    CHECK(rep.pooled_micro.recall == TP / (TP + FN));
  }
}

TEST_CASE("pmi") {
  // n(0,1)=4, n(0)=10, n(1)=8
  std::vector<LabelVector> labels;
  auto add = [&](int count, bool a, bool b) {
    for (int k = 0; k < count; ++k) {
      LabelVector v{};
      v[0] = a;
      v[1] = b;
      v[7] = 1;
      labels.push_back(v);
    }
  };
  add(4, true, true);
  add(6, true, false);
  add(4, false, true);
  auto m = pmi(labels);
  REQUIRE(m.value[0][1].has_value());
  CHECK(*m.value[0][1] == doctest::Approx(std::log(4.0 / 80.0)));
  CHECK(*m.value[0][1] == doctest::Approx(-2.996).epsilon(1e-3));
  CHECK_FALSE(m.value[0][2].has_value());
  CHECK_FALSE(m.value[3][3].has_value());
  auto norm = pmi(labels, true);
  CHECK(*norm.value[0][1] == doctest::Approx(std::log(14.0 * 4.0 / 80.0)));

  std::mt19937 gen(5);
  std::vector<LabelVector> rnd;
  for (int r = 0; r < 200; ++r) rnd.push_back(random_bits(gen, 0.3));
  auto p = pmi(rnd);
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    for (std::size_t j = 0; j < kNumMedications; ++j) {
      double ni = 0, nj = 0, nij = 0;
      for (const auto& l : rnd) {
        ni += l[i];
        nj += l[j];
        nij += l[i] && l[j];
      }
      if (i == j || nij == 0) {
        CHECK_FALSE(p.value[i][j].has_value());
        continue;
      }
      REQUIRE(p.value[i][j].has_value());
      CHECK(*p.value[i][j] == std::log(nij / (ni * nj)));
      CHECK(*p.value[i][j] == *p.value[j][i]);
    }
  }
}

TEST_CASE("spearman") {
  std::vector<std::optional<double>> a = {1, 2, 3, 4}, b = {10, 20, 30, 40}, c = {4, 3, 2, 1};
  CHECK(*spearman(a, b) == doctest::Approx(1.0));
  CHECK(*spearman(a, c) == doctest::Approx(-1.0));
  std::vector<std::optional<double>> flat = {1, 1, 1, 1};
  CHECK_FALSE(spearman(a, flat).has_value());
  std::vector<std::optional<double>> missing = {1, std::nullopt, 3, 4};
  std::vector<std::optional<double>> ranked = {2, 1, 3, 4};
  CHECK(*spearman(missing, ranked) == doctest::Approx(1.0));
  // textbook value with ties: ranks (1.5,1.5,3) vs (1,2,3)
  std::vector<std::optional<double>> t1 = {1, 1, 2}, t2 = {1, 2, 3};
  CHECK(*spearman(t1, t2) == doctest::Approx(0.8660254037844386));
}

TEST_CASE("rank_comparison") {
  std::mt19937 gen(2);
  std::vector<LabelVector> rnd;
  for (int r = 0; r < 500; ++r) rnd.push_back(random_bits(gen, 0.4));
  auto p = pmi(rnd);
  auto same = rank_comparison(to_score_matrix(p), p);
  CHECK(same.top1_agreement == 8);
  for (const auto& m : same.per_medication) CHECK(*m.spearman == doctest::Approx(1.0));

  ScoreMatrix neg = to_score_matrix(p);
  for (auto& row : neg)
    for (auto& v : row)
      if (v) v = -*v;
  auto rev = rank_comparison(neg, p);
  for (const auto& m : rev.per_medication) CHECK(*m.spearman == doctest::Approx(-1.0));

  SUBCASE("published metoprolol column") {
    // Partner order: Metoprolol, Furosemide, Lisinopril, Amlodipine, Atenolol, Hctz, Diltiazem, Carvedilol
    ScoreMatrix corr{};
    PmiMatrix pm;
    const double corr_row[] = {0, 0.45, -0.16, -0.27, -0.45, -0.35, -0.47, -0.35};
    const double pmi_row[] = {0, 0.02, -0.10, -0.22, -1.40, -0.24, -0.21, -1.64};
    for (std::size_t j = 1; j < kNumMedications; ++j) {
      corr[0][j] = corr_row[j];
      pm.value[0][j] = pmi_row[j];
    }
    auto rc = rank_comparison(corr, pm);
    CHECK(rc.per_medication[0].top1_agree);
    CHECK(rc.per_medication[0].corr_order.front().first == index_of(Medication::Furosemide));
    CHECK(rc.per_medication[0].pmi_order.front().first == index_of(Medication::Furosemide));
    CHECK(*rc.per_medication[0].spearman <= 1.0);
    CHECK(*rc.per_medication[0].spearman >= -1.0);
  }
}

TEST_CASE("tables") {
  std::vector<LabelVector> labels(4, LabelVector{});
  labels[0][0] = labels[1][1] = 1;
  std::vector<NamedReport> reps = {{"CNN", evaluate(labels, labels)}};
  auto text = f1_table_text(reps);
  CHECK(text.find("Metoprolol") != std::string::npos);
  CHECK(text.find("Macro Avg") != std::string::npos);
  CHECK(text.find("1.00") != std::string::npos);
  auto csv = f1_table_csv(reps);
  CHECK(csv.rfind("model,row,precision,recall,f1,support\n", 0) == 0);
  CHECK(csv.find("CNN,Metoprolol,1.000000,1.000000,1.000000,1") != std::string::npos);
}

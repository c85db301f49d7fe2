#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "medpred/analysis.hpp"
#include "medpred/error.hpp"

using namespace medpred;
using namespace medpred::analysis;
using corpus::EncodedExample;

namespace {

corpus::Vocabulary make_vocab(std::size_t words) {
  corpus::Vocabulary v;
  for (std::size_t i = 0; i < words; ++i) v.add("w" + std::to_string(1000 + i), 1);
  return v;
}

nd::Tensor random_embedding(std::size_t rows, std::size_t h, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> n;
  nd::Tensor T({rows, h});
  for (auto& x : T.storage()) x = n(gen);
  return T;
}

std::vector<EncodedExample> random_notes(std::size_t count, std::size_t vocab, std::uint32_t seed,
                                         std::size_t L = 30) {
  std::mt19937 gen(seed);
  std::vector<EncodedExample> out;
  for (std::size_t r = 0; r < count; ++r) {
    EncodedExample e;
    e.visit_id = "n" + std::to_string(r);
    e.length = 5 + gen() % (L - 5);
    e.token_indices.assign(L, corpus::kPadIndex);
    for (std::size_t p = 0; p < e.length; ++p) e.token_indices[p] = static_cast<std::int32_t>(2 + gen() % (vocab - 2));
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("nearest_neighbor") {
  SUBCASE("two real words") {
    auto v = make_vocab(2);
    auto T = random_embedding(v.size(), 4, 1);
    auto n = nearest_neighbor("w1000", T, v);
    CHECK(n.neighbor == "w1001");
    CHECK(n.query == "w1000");
  }
  SUBCASE("planted duplicate") {
    auto v = make_vocab(10);
    auto T = random_embedding(v.size(), 6, 2);
    for (std::size_t c = 0; c < 6; ++c) T[7 * 6 + c] = T[3 * 6 + c];
    auto n = nearest_neighbor(v.word(3), T, v);
    CHECK(n.neighbor == v.word(7));
    CHECK(n.distance == 0.0);
  }
  SUBCASE("pad and unk never win") {
    auto v = make_vocab(3);
    nd::Tensor T({v.size(), 2}, 5.0);
    T[0] = T[1] = T[2] = T[3] = 0.0;  // pad, unk at the origin
    T[4] = T[5] = 0.0;                // query at the origin too
    auto n = nearest_neighbor(v.word(2), T, v);
    CHECK(n.neighbor != "<pad>");
    CHECK(n.neighbor != "<unk>");
  }
  SUBCASE("ties go to the smaller word") {
    auto v = make_vocab(3);
    nd::Tensor T({v.size(), 1});
    T[2] = 0.0, T[3] = 1.0, T[4] = -1.0;
    CHECK(nearest_neighbor("w1000", T, v).neighbor == "w1001");
  }
  SUBCASE("errors") {
    auto v = make_vocab(3);
    auto T = random_embedding(v.size(), 3, 3);
    CHECK_THROWS_AS(nearest_neighbor("nope", T, v), Error);
    CHECK_THROWS_AS(nearest_neighbor("<pad>", T, v), Error);
    auto one = make_vocab(1);
    CHECK_THROWS_AS(nearest_neighbor("w1000", random_embedding(one.size(), 3, 1), one), Error);
  }
  SUBCASE("exhaustive scan, 50 words") {
    auto v = make_vocab(50);
    auto T = random_embedding(v.size(), 8, 9);
    for (std::size_t q = 2; q < v.size(); ++q) {
      double best = INFINITY;
      std::string word;
      for (std::size_t i = 2; i < v.size(); ++i) {
        if (i == q) continue;
        double d = 0;
        for (std::size_t c = 0; c < 8; ++c) d += (T[i * 8 + c] - T[q * 8 + c]) * (T[i * 8 + c] - T[q * 8 + c]);
        if (std::sqrt(d) < best) best = std::sqrt(d), word = v.word(i);
      }
      auto n = nearest_neighbor(v.word(q), T, v);
      CHECK(n.neighbor == word);
      CHECK(n.distance == best);
    }
  }
}

TEST_CASE("top_ngrams") {
  SUBCASE("single window") {
    auto v = make_vocab(5);
    auto T = random_embedding(v.size(), 3, 4);
    EncodedExample e;
    e.token_indices = {2, 3, 4, 0, 0};
    e.length = 3;
    model::FilterView f;
    f.window = 3;
    f.W = nd::Tensor({3, 3}, 0.1);
    f.activation = nd::Activation::Identity;
    auto top = top_ngrams(f, T, v, std::span(&e, 1));
    REQUIRE(top.size() == 1);
    CHECK(top[0].ngram == "w1000 w1001 w1002");
  }
  SUBCASE("duplicate text reported once") {
    auto v = make_vocab(4);
    auto T = random_embedding(v.size(), 2, 5);
    EncodedExample e;
    e.token_indices = {2, 3, 2, 3, 2, 3};
    e.length = 6;
    model::FilterView f;
    f.window = 2;
    f.W = nd::Tensor({2, 2}, 1.0);
    f.activation = nd::Activation::Identity;
    auto top = top_ngrams(f, T, v, std::span(&e, 1));
    CHECK(top.size() == 2);  // "w1000 w1001" and "w1001 w1000"
    CHECK(top[0].ngram != top[1].ngram);
  }
  SUBCASE("planted trigram is recovered") {
    const std::size_t h = 64;
    auto v = make_vocab(200);
    auto T = random_embedding(v.size(), h, 6);
    for (std::size_t r = 0; r < v.size(); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < h; ++c) s += T[r * h + c] * T[r * h + c];
      for (std::size_t c = 0; c < h; ++c) T[r * h + c] /= std::sqrt(s);
    }
    auto notes = random_notes(60, v.size(), 7);
    const std::int32_t trig[3] = {40, 41, 42};
    for (std::size_t r = 0; r < notes.size(); r += 3) std::copy(trig, trig + 3, notes[r].token_indices.begin() + 1);
    model::FilterView f;
    f.window = 3;
    f.W = nd::Tensor({3, h});
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < h; ++c) f.W[k * h + c] = T[static_cast<std::size_t>(trig[k]) * h + c];
    auto top = top_ngrams(f, T, v, notes);
    CHECK(top.front().ngram == "w1038 w1039 w1040");
    CHECK(top.front().value == doctest::Approx(3.0));
  }
  SUBCASE("brute force over all windows") {
    auto v = make_vocab(40);
    auto T = random_embedding(v.size(), 5, 8);
    auto notes = random_notes(100, v.size(), 9);
    model::FilterView f;
    f.window = 4;
    f.W = random_embedding(4, 5, 10);
    f.bias = 0.3, f.scale = 1.7, f.shift = -0.2;
    auto top = top_ngrams(f, T, v, notes);
    std::set<std::string> seen;
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& n : notes) {
      for (std::size_t p = 0; p + 4 <= n.length; ++p) {
        std::string text;
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) {
          const auto w = static_cast<std::size_t>(n.token_indices[p + k]);
          text += (k ? " " : "") + v.word(w);
          for (std::size_t c = 0; c < 5; ++c) s += f.W[k * 5 + c] * T[w * 5 + c];
        }
        if (seen.insert(text).second) ranked.push_back({std::max(0.0, 1.7 * (s + 0.3) - 0.2), text});
      }
    }
    std::sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.first > b.first; });
    REQUIRE(top.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) CHECK(top[k].value == doctest::Approx(ranked[k].first).epsilon(1e-12));
    for (std::size_t k = 1; k < 5; ++k) CHECK(top[k].value <= top[k - 1].value);
  }
}

TEST_CASE("filter values agree with the model's pooled features") {
  model::CnnConfig cfg;
  cfg.embed_dim = 6;
  cfg.filters_per_window = 3;
  cfg.dense_units = 4;
  cfg.windows = {2, 3};
  auto v = make_vocab(30);
  model::CnnModel m(cfg, v.size(), 11);
  std::mt19937 gen(1);
  for (auto& st : m.bn_states()) {
    for (auto& x : st.running_mean.storage()) x = (gen() % 100) / 200.0 - 0.25;
    for (auto& x : st.running_var.storage()) x = 0.001 + (gen() % 100) / 50000.0;
  }
  auto notes = random_notes(20, v.size(), 12, 20);
  const auto traces = m.infer_examples(notes);
  for (std::size_t r = 0; r < notes.size(); ++r) {
    for (std::size_t bank = 0; bank < 2; ++bank) {
      for (std::size_t f = 0; f < 3; ++f) {
        auto top = top_ngrams(m.filter(bank, f), m.param("T").value, v, std::span(&notes[r], 1), 1);
        CHECK(top[0].value == doctest::Approx(traces[r].z[bank * 3 + f]).epsilon(1e-10));
      }
    }
  }
  auto all = all_filter_ngrams(m, v, notes, 5);
  CHECK(all.size() == 6);
  CHECK(all[4].window == 3);
  CHECK(all[4].filter_id == 4);
}

namespace {

std::vector<std::vector<double>> two_clusters(std::uint32_t seed, std::vector<int>* which = nullptr) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> X;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x(10);
    for (auto& c : x) c = n(gen) + (k < 50 ? 0.0 : 8.0);
    X.push_back(x);
    if (which) which->push_back(k < 50 ? 0 : 1);
  }
  return X;
}

}  // namespace

TEST_CASE("t-SNE affinities") {
  auto X = two_clusters(3);
  auto P = conditional_affinities(X, 20.0);
  for (std::size_t i = 0; i < P.size(); ++i) {
    double s = 0, H = 0;
    for (double p : P[i]) {
      s += p;
      if (p > 0) H -= p * std::log(p);
    }
    CHECK(std::abs(s - 1.0) < 1e-8);
    CHECK(std::exp(H) == doctest::Approx(20.0).epsilon(1e-6));
    CHECK(P[i][i] == 0.0);
  }
  auto J = joint_affinities(X, 20.0);
  double total = 0;
  for (std::size_t i = 0; i < J.size(); ++i)
    for (std::size_t j = 0; j < J.size(); ++j) {
      total += J[i][j];
      CHECK(J[i][j] == J[j][i]);
    }
  CHECK(std::abs(total - 1.0) < 1e-8);

  std::vector<std::array<double, 2>> Y;
  for (int k = 0; k < 30; ++k) Y.push_back({std::cos(k), std::sin(3.0 * k)});
  auto Q = output_affinities(Y);
  double qs = 0;
  for (auto& row : Q)
    for (double q : row) qs += q;
  CHECK(std::abs(qs - 1.0) < 1e-8);
  CHECK(kl_divergence(Q, Q) == doctest::Approx(0.0));
}

TEST_CASE("t-SNE on two clusters") {
  std::vector<int> which;
  auto X = two_clusters(5, &which);
  TsneConfig cfg;
  cfg.seed = 4;
  auto r = tsne(X, cfg);
  CHECK(r.kl_final < r.kl_initial);
  CHECK(r.kl_final < r.kl_post_exaggeration);
  CHECK(r.kl_final >= 0.0);
  double intra = 0, inter = 0;
  int ni = 0, ne = 0;
  for (std::size_t i = 0; i < X.size(); ++i)
    for (std::size_t j = i + 1; j < X.size(); ++j) {
      const double d = std::hypot(r.Y[i][0] - r.Y[j][0], r.Y[i][1] - r.Y[j][1]);
      if (which[i] == which[j]) intra += d, ++ni;
      else inter += d, ++ne;
    }
  CHECK(intra / ni < inter / ne);

  auto again = tsne(X, cfg);
  CHECK(again.Y == r.Y);
  CHECK(again.kl_final == r.kl_final);
}

TEST_CASE("t-SNE errors") {
  std::vector<std::vector<double>> small(9, std::vector<double>(2, 0.0));
  CHECK_THROWS_AS(tsne(small), Error);
  auto X = two_clusters(1);
  TsneConfig cfg;
  cfg.perplexity = 34.0;  // >= 100 / 3
  try {
    tsne(X, cfg);
    FAIL("expected BadPerplexity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadPerplexity);
  }
  cfg.perplexity = 0.0;
  CHECK_THROWS_AS(tsne(X, cfg), Error);
}

TEST_CASE("sample_indices and csv") {
  auto s = sample_indices(5000, 2000, 3);
  CHECK(s.size() == 2000);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 2000);
  CHECK(sample_indices(10, 2000, 3).size() == 10);
  CHECK(sample_indices(5000, 2000, 3) == s);

  CHECK(neighbors_csv({{"a", "b", 0.5}}) == "query,neighbor,distance\na,b,0.5\n");
  FilterNgrams f{3, 4, {{"x, y", 1.0}}};
  CHECK(filter_ngrams_csv({f}) == "filter_id,window,rank,ngram,value\n3,4,1,\"x, y\",1\n");
  TsneResult r;
  r.Y = {{1.0, 2.0}};
  notes::LabelVector l{};
  l[2] = 1;
  CHECK(tsne_csv({"v1"}, r, {l}) ==
        "visit_id,x,y,med_0,med_1,med_2,med_3,med_4,med_5,med_6,med_7\nv1,1,2,0,0,1,0,0,0,0,0\n");
}

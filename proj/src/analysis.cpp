#include "medpred/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "medpred/error.hpp"
#include "medpred/nd/rng.hpp"

namespace medpred::analysis {

namespace {

double act(nd::Activation a, double v) {
  switch (a) {
    case nd::Activation::Identity: return v;
    case nd::Activation::Relu: return v > 0 ? v : 0.0;
    case nd::Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case nd::Activation::Tanh: return std::tanh(v);
  }
  return v;
}

bool is_special(std::size_t i) {
  return i == static_cast<std::size_t>(corpus::kPadIndex) || i == static_cast<std::size_t>(corpus::kUnkIndex);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Neighbor nearest_neighbor(std::string_view word, const nd::Tensor& T, const corpus::Vocabulary& vocab) {
  const auto q = vocab.find(word);
  if (!q || is_special(static_cast<std::size_t>(*q))) {
    throw Error(ErrorCode::UnknownWord, "'" + std::string(word) + "' is not in the vocabulary");
  }
  if (T.rank() != 2 || T.dim(0) != vocab.size()) throw Error(ErrorCode::ShapeMismatch, "embedding rows != vocabulary");
  const std::size_t h = T.dim(1), qi = static_cast<std::size_t>(*q);

  Neighbor best;
  best.query = std::string(word);
  bool found = false;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (i == qi || is_special(i)) continue;
    double d = 0.0;
    for (std::size_t c = 0; c < h; ++c) {
      const double diff = T[i * h + c] - T[qi * h + c];
      d += diff * diff;
    }
    d = std::sqrt(d);
    if (!found || d < best.distance || (d == best.distance && vocab.word(i) < best.neighbor)) {
      best.neighbor = vocab.word(i);
      best.distance = d;
      found = true;
    }
  }
  if (!found) throw Error(ErrorCode::EmptyInput, "vocabulary has no other word");
  return best;
}

double filter_value(const model::FilterView& f, const nd::Tensor& T, std::span<const std::int32_t> window) {
  const std::size_t h = T.dim(1);
  if (window.size() != f.window) throw Error(ErrorCode::ShapeMismatch, "window length differs from filter");
  double s = f.bias;
  for (std::size_t k = 0; k < f.window; ++k) {
    const auto w = static_cast<std::size_t>(window[k]);
    for (std::size_t c = 0; c < h; ++c) s += f.W[k * h + c] * T[w * h + c];
  }
  return act(f.activation, f.scale * s + f.shift);
}

std::vector<NgramScore> top_ngrams(const model::FilterView& f, const nd::Tensor& T, const corpus::Vocabulary& vocab,
                                   std::span<const corpus::EncodedExample> notes, std::size_t N) {
  if (N == 0) return {};
  const std::size_t h = T.dim(1), v = T.dim(0), n = f.window;

  // Screening pass: tab[k*v + w] = <W_k, T_w>, so a window costs n lookups.
  std::vector<double> tab(n * v);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t w = 0; w < v; ++w) {
      double s = 0.0;
      for (std::size_t c = 0; c < h; ++c) s += f.W[k * h + c] * T[w * h + c];
      tab[k * v + w] = s;
    }
  }
  struct Win {
    double approx;
    const std::int32_t* tokens;
  };
  std::vector<Win> wins;
  for (const auto& note : notes) {
    if (note.length < n) continue;
    for (std::size_t p = 0; p + n <= note.length; ++p) {
      const std::int32_t* t = note.token_indices.data() + p;
      double s = f.bias;
      for (std::size_t k = 0; k < n; ++k) s += tab[k * v + static_cast<std::size_t>(t[k])];
      wins.push_back({act(f.activation, f.scale * s + f.shift), t});
    }
  }
  if (wins.empty()) return {};

  // Value of the N-th best distinct n-gram, widening the candidate pool until
  // it holds N distinct ones.
  auto desc = [](const Win& a, const Win& b) { return a.approx > b.approx; };
  auto seq = [n](const Win& w) { return std::vector<std::int32_t>(w.tokens, w.tokens + n); };
  double thresh = -std::numeric_limits<double>::infinity();
  for (std::size_t K = std::min(wins.size(), 8 * N);; K = std::min(wins.size(), 4 * K)) {
    std::nth_element(wins.begin(), wins.begin() + static_cast<std::ptrdiff_t>(K - 1), wins.end(), desc);
    std::sort(wins.begin(), wins.begin() + static_cast<std::ptrdiff_t>(K), desc);
    std::set<std::vector<std::int32_t>> seen;
    for (std::size_t i = 0; i < K && seen.size() < N; ++i) {
      seen.insert(seq(wins[i]));
      if (seen.size() == N) thresh = wins[i].approx;
    }
    if (seen.size() == N || K == wins.size()) break;
  }
  // The screening sums round differently from filter_value, hence the margin.
  thresh -= 1e-9 * (1.0 + std::abs(thresh));

  std::map<std::string, double> best;
  std::set<std::vector<std::int32_t>> done;
  for (const auto& w : wins) {
    if (!(w.approx >= thresh) || !done.insert(seq(w)).second) continue;
    std::string text;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) text += ' ';
      text += vocab.word(static_cast<std::size_t>(w.tokens[k]));
    }
    const double val = filter_value(f, T, std::span<const std::int32_t>(w.tokens, n));
    auto [it, fresh] = best.emplace(std::move(text), val);
    if (!fresh) it->second = std::max(it->second, val);
  }
  std::vector<NgramScore> out;
  for (auto& [text, val] : best) out.push_back({text, val});
  std::stable_sort(out.begin(), out.end(), [](const NgramScore& a, const NgramScore& b) { return a.value > b.value; });
  if (out.size() > N) out.resize(N);
  return out;
}

std::vector<FilterNgrams> all_filter_ngrams(const model::CnnModel& m, const corpus::Vocabulary& vocab,
                                            std::span<const corpus::EncodedExample> notes, std::size_t N) {
  const auto& cfg = m.config();
  const nd::Tensor& T = m.params()[m.params().index_of("T")].value;
  std::vector<FilterNgrams> out;
  for (std::size_t bank = 0; bank < cfg.windows.size(); ++bank) {
    for (std::size_t f = 0; f < cfg.filters_per_window; ++f) {
      FilterNgrams r;
      r.filter_id = bank * cfg.filters_per_window + f;
      r.window = cfg.windows[bank];
      r.top = top_ngrams(m.filter(bank, f), T, vocab, notes, N);
      out.push_back(std::move(r));
    }
  }
  return out;
}

// --- t-SNE -----------------------------------------------------------------

namespace {

std::vector<double> squared_distances(const std::vector<std::vector<double>>& X) {
  const std::size_t n = X.size();
  std::vector<double> D(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < X[i].size(); ++c) {
        const double diff = X[i][c] - X[j][c];
        d += diff * diff;
      }
      D[i * n + j] = D[j * n + i] = d;
    }
  }
  return D;
}

void check_input(const std::vector<std::vector<double>>& X, double perplexity) {
  const std::size_t n = X.size();
  if (n < 10) throw Error(ErrorCode::TooFewPoints, "t-SNE needs at least 10 points");
  for (const auto& row : X) {
    if (row.size() != X.front().size()) throw Error(ErrorCode::ShapeMismatch, "rows differ in length");
  }
  if (!(perplexity > 0.0) || !(perplexity < static_cast<double>(n) / 3.0)) {
    throw Error(ErrorCode::BadPerplexity, "perplexity must lie in (0, n/3)");
  }
}

// Row-conditional affinities into a flat n x n buffer.
std::vector<double> conditional_flat(const std::vector<std::vector<double>>& X, double perplexity) {
  const std::size_t n = X.size();
  const std::vector<double> D = squared_distances(X);
  const double target = std::log(perplexity);
  std::vector<double> P(n * n, 0.0);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    // Distances are shifted by the row minimum so exp() cannot underflow everywhere.
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, D[i * n + j]);
    }
    for (int it = 0; it < 200; ++it) {
      double sum = 0.0, dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * (D[i * n + j] - dmin));
        sum += row[j];
        dot += row[j] * (D[i * n + j] - dmin);
      }
      const double H = std::log(sum) + beta * dot / sum;
      if (std::abs(H - target) < 1e-10) break;
      if (H > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) P[i * n + j] = row[j] / sum;
  }
  return P;
}

std::vector<double> joint_flat(const std::vector<std::vector<double>>& X, double perplexity) {
  const std::size_t n = X.size();
  std::vector<double> P = conditional_flat(X, perplexity);
  std::vector<double> J(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) J[i * n + j] = (P[i * n + j] + P[j * n + i]) / (2.0 * static_cast<double>(n));
  }
  return J;
}

// Student-t kernel values (zero diagonal) and their sum.
double kernel(const std::vector<std::array<double, 2>>& Y, std::vector<double>& num) {
  const std::size_t n = Y.size();
  num.assign(n * n, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = Y[i][0] - Y[j][0], dy = Y[i][1] - Y[j][1];
      const double v = 1.0 / (1.0 + dx * dx + dy * dy);
      num[i * n + j] = num[j * n + i] = v;
      sum += 2.0 * v;
    }
  }
  return sum;
}

double kl_flat(const std::vector<double>& P, const std::vector<double>& num, double sum) {
  double kl = 0.0;
  for (std::size_t k = 0; k < P.size(); ++k) {
    if (P[k] <= 0.0) continue;
    const double q = std::max(num[k] / sum, std::numeric_limits<double>::min());
    kl += P[k] * std::log(P[k] / q);
  }
  return kl;
}

std::vector<std::vector<double>> unflatten(const std::vector<double>& flat, std::size_t n) {
  std::vector<std::vector<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].assign(flat.begin() + static_cast<std::ptrdiff_t>(i * n),
                  flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> conditional_affinities(const std::vector<std::vector<double>>& X,
                                                        double perplexity) {
  check_input(X, perplexity);
  return unflatten(conditional_flat(X, perplexity), X.size());
}

std::vector<std::vector<double>> joint_affinities(const std::vector<std::vector<double>>& X, double perplexity) {
  check_input(X, perplexity);
  return unflatten(joint_flat(X, perplexity), X.size());
}

std::vector<std::vector<double>> output_affinities(const std::vector<std::array<double, 2>>& Y) {
  std::vector<double> num;
  const double sum = kernel(Y, num);
  for (auto& v : num) v /= sum;
  return unflatten(num, Y.size());
}

double kl_divergence(const std::vector<std::vector<double>>& P, const std::vector<std::vector<double>>& Q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    for (std::size_t j = 0; j < P[i].size(); ++j) {
      if (P[i][j] <= 0.0) continue;
      kl += P[i][j] * std::log(P[i][j] / std::max(Q[i][j], std::numeric_limits<double>::min()));
    }
  }
  return kl;
}

TsneResult tsne(const std::vector<std::vector<double>>& X, const TsneConfig& config) {
  check_input(X, config.perplexity);
  const std::size_t n = X.size();
  const std::vector<double> P = joint_flat(X, config.perplexity);

  nd::Rng rng(config.seed);
  TsneResult r;
  r.Y.resize(n);
  for (auto& y : r.Y) y = {1e-4 * rng.normal(), 1e-4 * rng.normal()};

  std::vector<double> num;
  double sum = kernel(r.Y, num);
  r.kl_initial = kl_flat(P, num, sum);
  r.kl_post_exaggeration = r.kl_initial;

  std::vector<std::array<double, 2>> update(n, {0.0, 0.0}), gains(n, {1.0, 1.0}), grad(n);
  for (int it = 0; it < config.iterations; ++it) {
    const double ex = it < config.exaggeration_iters ? config.exaggeration : 1.0;
    const double momentum = it < config.momentum_switch ? config.momentum_start : config.momentum_final;
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = (ex * P[i * n + j] - num[i * n + j] / sum) * num[i * n + j];
        gx += w * (r.Y[i][0] - r.Y[j][0]);
        gy += w * (r.Y[i][1] - r.Y[j][1]);
      }
      grad[i] = {4.0 * gx, 4.0 * gy};
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        auto& g = gains[i][d];
        g = (grad[i][d] > 0) != (update[i][d] > 0) ? g + 0.2 : g * 0.8;
        g = std::max(g, 0.01);
        update[i][d] = momentum * update[i][d] - config.learning_rate * g * grad[i][d];
        r.Y[i][d] += update[i][d];
      }
    }
    double mx = 0.0, my = 0.0;
    for (const auto& y : r.Y) mx += y[0], my += y[1];
    mx /= static_cast<double>(n), my /= static_cast<double>(n);
    for (auto& y : r.Y) y[0] -= mx, y[1] -= my;

    sum = kernel(r.Y, num);
    if (it + 1 == config.exaggeration_iters) r.kl_post_exaggeration = kl_flat(P, num, sum);
  }
  r.kl_final = kl_flat(P, num, sum);
  for (const auto& y : r.Y) {
    if (!std::isfinite(y[0]) || !std::isfinite(y[1])) throw Error(ErrorCode::NonFinite, "t-SNE diverged");
  }
  return r;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t max_points, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= max_points) return idx;
  nd::Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(max_points);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// --- CSV -------------------------------------------------------------------

std::string neighbors_csv(const std::vector<Neighbor>& rows) {
  std::string out = "query,neighbor,distance\n";
  for (const auto& r : rows) out += csv_field(r.query) + "," + csv_field(r.neighbor) + "," + fmt(r.distance) + "\n";
  return out;
}

std::string filter_ngrams_csv(const std::vector<FilterNgrams>& filters) {
  std::string out = "filter_id,window,rank,ngram,value\n";
  for (const auto& f : filters) {
    for (std::size_t k = 0; k < f.top.size(); ++k) {
      out += std::to_string(f.filter_id) + "," + std::to_string(f.window) + "," + std::to_string(k + 1) + "," +
             csv_field(f.top[k].ngram) + "," + fmt(f.top[k].value) + "\n";
    }
  }
  return out;
}

std::string tsne_csv(const std::vector<std::string>& visit_ids, const TsneResult& result,
                     const std::vector<notes::LabelVector>& labels) {
  if (visit_ids.size() != result.Y.size() || labels.size() != result.Y.size()) {
    throw Error(ErrorCode::ShapeMismatch, "t-SNE rows, ids and labels differ in count");
  }
  std::string out = "visit_id,x,y";
  for (std::size_t i = 0; i < kNumMedications; ++i) out += ",med_" + std::to_string(i);
  out += "\n";
  for (std::size_t r = 0; r < visit_ids.size(); ++r) {
    out += csv_field(visit_ids[r]) + "," + fmt(result.Y[r][0]) + "," + fmt(result.Y[r][1]);
    for (std::size_t i = 0; i < kNumMedications; ++i) out += labels[r][i] ? ",1" : ",0";
    out += "\n";
  }
  return out;
}

}  // namespace medpred::analysis

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medpred/corpus.hpp"
#include "medpred/model.hpp"

namespace medpred::analysis {

// --- embedding neighbours --------------------------------------------------

struct Neighbor {
  std::string query;
  std::string neighbor;
  double distance = 0.0;
};

// Closest other real word (pad and unk excluded) by Euclidean distance; ties go
// to the lexicographically smaller word. Throws UnknownWord, or EmptyInput when
// the vocabulary has no other real word.
Neighbor nearest_neighbor(std::string_view word, const nd::Tensor& T, const corpus::Vocabulary& vocab);

// --- filter n-grams -------------------------------------------------------

struct NgramScore {
  std::string ngram;  // space-joined words
  double value = 0.0;
};

struct FilterNgrams {
  std::size_t filter_id = 0;  // bank * filters_per_window + f
  std::size_t window = 0;
  std::vector<NgramScore> top;  // non-increasing values
};

// Post-activation feature value of one window of token indices.
double filter_value(const model::FilterView& f, const nd::Tensor& T, std::span<const std::int32_t> window);

// Every valid window of every note; distinct n-gram texts, best N by value
// (ties by text).
std::vector<NgramScore> top_ngrams(const model::FilterView& f, const nd::Tensor& T, const corpus::Vocabulary& vocab,
                                   std::span<const corpus::EncodedExample> notes, std::size_t N = 5);

std::vector<FilterNgrams> all_filter_ngrams(const model::CnnModel& m, const corpus::Vocabulary& vocab,
                                            std::span<const corpus::EncodedExample> notes, std::size_t N = 5);

// --- t-SNE -----------------------------------------------------------------

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  int exaggeration_iters = 250;
  double momentum_start = 0.5;
  double momentum_final = 0.8;
  int momentum_switch = 250;
  std::uint64_t seed = 0;
};

struct TsneResult {
  std::vector<std::array<double, 2>> Y;
  double kl_initial = 0.0;             // before the first update
  double kl_post_exaggeration = 0.0;   // right after exaggeration ends
  double kl_final = 0.0;
};

// Conditional affinities p_{j|i}, each row calibrated to `perplexity` by
// binary search on the Gaussian precision. Rows sum to 1.
std::vector<std::vector<double>> conditional_affinities(const std::vector<std::vector<double>>& X,
                                                        double perplexity);
// (P + P^T) / 2n; sums to 1.
std::vector<std::vector<double>> joint_affinities(const std::vector<std::vector<double>>& X, double perplexity);
// Student-t affinities of a 2-D layout; sums to 1.
std::vector<std::vector<double>> output_affinities(const std::vector<std::array<double, 2>>& Y);
double kl_divergence(const std::vector<std::vector<double>>& P, const std::vector<std::vector<double>>& Q);

// Exact t-SNE. Throws TooFewPoints below 10 points, BadPerplexity unless
// 0 < perplexity < n/3.
TsneResult tsne(const std::vector<std::vector<double>>& X, const TsneConfig& config = {});

// Up to `max_points` distinct indices in [0, n), sorted; all of them if n is small.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t max_points, std::uint64_t seed);

// --- CSV -------------------------------------------------------------------

std::string neighbors_csv(const std::vector<Neighbor>& rows);
std::string filter_ngrams_csv(const std::vector<FilterNgrams>& filters);
std::string tsne_csv(const std::vector<std::string>& visit_ids, const TsneResult& result,
                     const std::vector<notes::LabelVector>& labels);

}  // namespace medpred::analysis

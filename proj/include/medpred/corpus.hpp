#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medpred/note_parser.hpp"

namespace medpred::corpus {

inline constexpr std::int32_t kPadIndex = 0;
inline constexpr std::int32_t kUnkIndex = 1;
inline constexpr std::string_view kPadWord = "<pad>";
inline constexpr std::string_view kUnkWord = "<unk>";

class Vocabulary {
 public:
  Vocabulary();

  std::size_t size() const { return words_.size(); }
  std::int32_t index_of(std::string_view word) const;  // kUnkIndex when absent
  std::optional<std::int32_t> find(std::string_view word) const;
  const std::string& word(std::size_t index) const { return words_.at(index); }
  std::size_t df(std::size_t index) const { return df_.at(index); }
  const std::vector<std::string>& words() const { return words_; }

  // Appends a word; used by build_vocabulary and when reading the text format.
  void add(std::string word, std::size_t df);

  // One `word<TAB>index<TAB>df` line per entry, index order.
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);

  std::uint64_t hash() const;

  bool operator==(const Vocabulary& o) const { return words_ == o.words_ && df_ == o.df_; }

 private:
  std::vector<std::string> words_;
  std::vector<std::size_t> df_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Throws EmptyCorpus when `notes` is empty. Words are ordered by corpus frequency
// (descending) then lexicographically, after pad and unk.
Vocabulary build_vocabulary(const std::vector<notes::ParsedNote>& notes, std::size_t min_count = 5);

// Truncated to L, right-padded with kPadIndex.
std::vector<std::int32_t> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                        std::size_t L);

struct SparseVector {
  std::vector<std::int32_t> index;  // ascending
  std::vector<double> value;

  std::size_t nnz() const { return index.size(); }
  bool operator==(const SparseVector&) const = default;
};

// tf = raw count, idf = ln(N / (1 + df)) clamped at 0, features are the `dim`
// vocabulary words with the highest document frequency (ties lexicographic).
class TfidfVectorizer {
 public:
  TfidfVectorizer() = default;
  TfidfVectorizer(std::vector<std::string> features, std::vector<double> idf);

  static TfidfVectorizer fit(const std::vector<notes::ParsedNote>& notes, const Vocabulary& vocab,
                             std::size_t dim);

  SparseVector transform(const std::vector<std::string>& tokens) const;

  std::size_t dim() const { return features_.size(); }
  const std::vector<std::string>& features() const { return features_; }
  const std::vector<double>& idf() const { return idf_; }

 private:
  std::vector<std::string> features_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::int32_t> column_;
};

std::vector<std::uint8_t> admission_med_vector(const notes::ParsedNote& note,
                                               const std::vector<std::string>& med_vocab);

// Sorted distinct admission-medication strings seen in `notes`.
std::vector<std::string> build_med_vocab(const std::vector<notes::ParsedNote>& notes);

struct EncodedExample {
  std::string visit_id;
  std::vector<std::int32_t> token_indices;  // length L
  std::size_t length = 0;                   // non-pad prefix
  SparseVector tfidf;
  notes::LabelVector labels{};
  std::vector<std::uint8_t> admission;
};

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};

// Deterministic shuffle under `seed`, then an 80/10/10 slice with
// validation = test = round(n / 10). Throws TooFewExamples below 10.
SplitIndices split_indices(std::size_t n, std::uint64_t seed);

template <class T>
struct Split {
  std::vector<T> train, validation, test;
  std::uint64_t seed = 0;
};

template <class T>
Split<T> split_dataset(const std::vector<T>& items, std::uint64_t seed) {
  const SplitIndices s = split_indices(items.size(), seed);
  Split<T> out;
  out.seed = seed;
  for (auto i : s.train) out.train.push_back(items[i]);
  for (auto i : s.validation) out.validation.push_back(items[i]);
  for (auto i : s.test) out.test.push_back(items[i]);
  return out;
}

struct CorpusConfig {
  std::size_t min_count = 5;
  std::size_t max_length = 500;  // L
  std::size_t tfidf_dim = 2500;
  std::size_t min_tokens = 5;    // shorter notes are dropped
};

struct Dataset {
  CorpusConfig config;
  std::uint64_t seed = 0;
  Vocabulary vocab;
  TfidfVectorizer tfidf;
  std::vector<std::string> med_vocab;
  Split<EncodedExample> split;
  std::size_t dropped_short = 0;
};

EncodedExample encode_example(const notes::ParsedNote& note, const Vocabulary& vocab,
                              const TfidfVectorizer& tfidf, const std::vector<std::string>& med_vocab,
                              std::size_t L);

// Splits the notes, then fits vocabulary, TF-IDF and the admission-medication
// vocabulary on the training part only.
Dataset build_dataset(const std::vector<notes::ParsedNote>& notes, const CorpusConfig& config,
                      std::uint64_t seed);

// --- synthetic corpora -----------------------------------------------------

struct SyntheticMedication {
  double rate = 0.2;                  // independent positive rate
  std::vector<std::string> triggers;  // tokens planted when the label is set
  double trigger_prob = 1.0;          // chance a positive label plants its triggers
  double noise = 0.0;                 // chance a negative label plants them anyway
};

struct SyntheticGroup {
  std::vector<std::size_t> members;  // medication indices
  double rate = 0.0;                 // chance the group fires
  double together = 1.0;             // all members vs. a single random member
};

struct SyntheticSpec {
  std::size_t num_notes = 2000;
  std::size_t tokens_min = 40;
  std::size_t tokens_max = 80;
  std::size_t filler_vocab = 300;
  std::array<SyntheticMedication, kNumMedications> medications;
  std::vector<SyntheticGroup> groups;
  double admission_carryover = 0.5;  // positive med also listed on admission
  double other_med_rate = 0.2;       // per non-target med in the side lists

  SyntheticSpec();
  void validate() const;  // throws InvalidSpec
};

// Rendered discharge notes; every one carries at least one target medication.
std::vector<notes::RawNote> generate_synthetic_notes(const SyntheticSpec& spec, std::uint64_t seed);

// generate_synthetic_notes followed by parse_note.
std::vector<notes::ParsedNote> generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace medpred::corpus

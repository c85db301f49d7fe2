#include "medpred/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "medpred/error.hpp"
#include "medpred/nd/rng.hpp"
#include "text_util.hpp"

namespace medpred::corpus {

using notes::ParsedNote;
using notes::RawNote;

// --- vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() {
  add(std::string(kPadWord), 0);
  add(std::string(kUnkWord), 0);
}

void Vocabulary::add(std::string word, std::size_t df) {
  if (index_.contains(word)) throw Error(ErrorCode::Format, "duplicate vocabulary word '" + word + "'");
  index_.emplace(word, static_cast<std::int32_t>(words_.size()));
  words_.push_back(std::move(word));
  df_.push_back(df);
}

std::optional<std::int32_t> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int32_t Vocabulary::index_of(std::string_view word) const {
  return find(word).value_or(kUnkIndex);
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out += words_[i];
    out += '\t';
    out += std::to_string(i);
    out += '\t';
    out += std::to_string(df_[i]);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  Vocabulary v;
  std::size_t expected = 0;
  for (auto raw : text::split_lines(text)) {
    auto line = text::trim(raw);
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) {
      throw Error(ErrorCode::Format, "vocabulary line needs three fields: " + std::string(line));
    }
    std::string word(line.substr(0, t1));
    std::size_t index = 0, df = 0;
    try {
      index = std::stoul(std::string(line.substr(t1 + 1, t2 - t1 - 1)));
      df = std::stoul(std::string(line.substr(t2 + 1)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::Format, "bad number in vocabulary line: " + std::string(line));
    }
    if (index != expected) throw Error(ErrorCode::Format, "vocabulary indices must be dense and ordered");
    ++expected;
    if (index < 2) {
      if (word != (index == 0 ? kPadWord : kUnkWord)) {
        throw Error(ErrorCode::Format, "indices 0 and 1 are reserved for <pad> and <unk>");
      }
      continue;
    }
    v.add(std::move(word), df);
  }
  if (expected < 2) throw Error(ErrorCode::Format, "vocabulary file lacks <pad>/<unk>");
  return v;
}

std::uint64_t Vocabulary::hash() const { return text::fnv1a(to_text()); }

Vocabulary build_vocabulary(const std::vector<ParsedNote>& notes, std::size_t min_count) {
  if (notes.empty()) throw Error(ErrorCode::EmptyCorpus, "no notes to build a vocabulary from");
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> counts;  // freq, df
  for (const auto& n : notes) {
    std::unordered_set<std::string_view> seen;
    for (const auto& t : n.tokens) {
      auto& c = counts[t];
      ++c.first;
      if (seen.insert(t).second) ++c.second;
    }
  }
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> kept;
  for (auto& [w, c] : counts) {
    if (c.first >= min_count && w != kPadWord && w != kUnkWord) kept.emplace_back(w, c);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.first < b.first;
  });
  Vocabulary v;
  for (auto& [w, c] : kept) v.add(w, c.second);
  return v;
}

std::vector<std::int32_t> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                        std::size_t L) {
  std::vector<std::int32_t> out(L, kPadIndex);
  const std::size_t n = std::min(L, tokens.size());
  for (std::size_t i = 0; i < n; ++i) out[i] = vocab.index_of(tokens[i]);
  return out;
}

// --- tf-idf ----------------------------------------------------------------

TfidfVectorizer::TfidfVectorizer(std::vector<std::string> features, std::vector<double> idf)
    : features_(std::move(features)), idf_(std::move(idf)) {
  if (features_.size() != idf_.size()) throw Error(ErrorCode::Format, "tfidf features/idf size mismatch");
  for (std::size_t j = 0; j < features_.size(); ++j) {
    column_.emplace(features_[j], static_cast<std::int32_t>(j));
  }
}

TfidfVectorizer TfidfVectorizer::fit(const std::vector<ParsedNote>& notes, const Vocabulary& vocab,
                                     std::size_t dim) {
  std::vector<std::size_t> df(vocab.size(), 0);
  for (const auto& n : notes) {
    std::unordered_set<std::int32_t> seen;
    for (const auto& t : n.tokens) {
      auto idx = vocab.find(t);
      if (idx && *idx >= 2 && seen.insert(*idx).second) ++df[*idx];
    }
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 2; i < vocab.size(); ++i) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (df[a] != df[b]) return df[a] > df[b];
    return vocab.word(a) < vocab.word(b);
  });
  order.resize(std::min(dim, order.size()));

  const double N = static_cast<double>(notes.size());
  std::vector<std::string> features;
  std::vector<double> idf;
  for (auto i : order) {
    features.push_back(vocab.word(i));
    idf.push_back(std::max(0.0, std::log(N / (1.0 + static_cast<double>(df[i])))));
  }
  return TfidfVectorizer(std::move(features), std::move(idf));
}

SparseVector TfidfVectorizer::transform(const std::vector<std::string>& tokens) const {
  std::map<std::int32_t, double> tf;
  for (const auto& t : tokens) {
    auto it = column_.find(t);
    if (it != column_.end()) tf[it->second] += 1.0;
  }
  SparseVector out;
  for (auto [j, count] : tf) {
    const double v = count * idf_[j];
    if (v == 0.0) continue;
    out.index.push_back(j);
    out.value.push_back(v);
  }
  return out;
}

// --- admission medications -------------------------------------------------

std::vector<std::uint8_t> admission_med_vector(const ParsedNote& note,
                                               const std::vector<std::string>& med_vocab) {
  std::vector<std::uint8_t> out(med_vocab.size(), 0);
  for (std::size_t j = 0; j < med_vocab.size(); ++j) out[j] = note.admission_meds.contains(med_vocab[j]);
  return out;
}

std::vector<std::string> build_med_vocab(const std::vector<ParsedNote>& notes) {
  std::set<std::string> all;
  for (const auto& n : notes) all.insert(n.admission_meds.begin(), n.admission_meds.end());
  return {all.begin(), all.end()};
}

// --- splits & datasets -----------------------------------------------------

SplitIndices split_indices(std::size_t n, std::uint64_t seed) {
  if (n < 10) {
    throw Error(ErrorCode::TooFewExamples, "need at least 10 examples to split, got " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  nd::Rng rng(seed);
  rng.shuffle(order);
  const auto tenth = static_cast<std::size_t>(std::llround(static_cast<double>(n) / 10.0));
  SplitIndices s;
  const std::size_t n_train = n - 2 * tenth;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.validation.assign(order.begin() + n_train, order.begin() + n_train + tenth);
  s.test.assign(order.begin() + n_train + tenth, order.end());
  return s;
}

EncodedExample encode_example(const ParsedNote& note, const Vocabulary& vocab,
                              const TfidfVectorizer& tfidf, const std::vector<std::string>& med_vocab,
                              std::size_t L) {
  EncodedExample e;
  e.visit_id = note.visit_id;
  e.token_indices = encode_tokens(note.tokens, vocab, L);
  e.length = std::min(L, note.tokens.size());
  e.tfidf = tfidf.transform(note.tokens);
  e.labels = note.labels;
  e.admission = admission_med_vector(note, med_vocab);
  return e;
}

Dataset build_dataset(const std::vector<ParsedNote>& notes, const CorpusConfig& config,
                      std::uint64_t seed) {
  if (config.max_length == 0) throw Error(ErrorCode::Config, "max_length must be positive");
  Dataset ds;
  ds.config = config;
  ds.seed = seed;

  std::vector<const ParsedNote*> usable;
  for (const auto& n : notes) {
    if (n.tokens.size() < config.min_tokens) {
      ++ds.dropped_short;
    } else {
      usable.push_back(&n);
    }
  }
  if (usable.empty()) throw Error(ErrorCode::EmptyCorpus, "no notes with enough tokens");
  const SplitIndices idx = split_indices(usable.size(), seed);

  std::vector<ParsedNote> train;
  train.reserve(idx.train.size());
  for (auto i : idx.train) train.push_back(*usable[i]);
  ds.vocab = build_vocabulary(train, config.min_count);
  ds.tfidf = TfidfVectorizer::fit(train, ds.vocab, config.tfidf_dim);
  ds.med_vocab = build_med_vocab(train);

  auto encode = [&](const std::vector<std::size_t>& ids, std::vector<EncodedExample>& out) {
    out.reserve(ids.size());
    for (auto i : ids) {
      out.push_back(encode_example(*usable[i], ds.vocab, ds.tfidf, ds.med_vocab, config.max_length));
    }
  };
  ds.split.seed = seed;
  encode(idx.train, ds.split.train);
  encode(idx.validation, ds.split.validation);
  encode(idx.test, ds.split.test);
  return ds;
}

// --- synthetic corpora -----------------------------------------------------

namespace {

constexpr std::string_view kDefaultTriggers[kNumMedications] = {
    "alphax", "betax", "gammax", "deltax", "epsilonx", "zetax", "etax", "thetax"};

constexpr std::string_view kOtherMeds[] = {"aspirin",   "atorvastatin", "insulin", "warfarin",
                                           "omeprazole", "simvastatin", "heparin", "docusate",
                                           "senna",     "acetaminophen"};

constexpr std::string_view kDoses[] = {"5", "10", "12.5", "20", "25", "40", "50", "100"};
constexpr std::string_view kFrequencies[] = {"daily", "BID", "TID", "QHS", "PRN"};

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

std::string title_case(std::string_view s) {
  std::string out(s);
  bool start = true;
  for (char& c : out) {
    if (start && c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    start = (c == ' ');
  }
  return out;
}

template <class T>
const T& pick(const std::vector<T>& v, nd::Rng& rng) {
  return v[rng.index(v.size())];
}

std::vector<std::string> make_filler(std::size_t count, const std::unordered_set<std::string>& banned,
                                     nd::Rng& rng) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  while (words.size() < count) {
    const std::size_t syllables = 2 + rng.index(2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += consonants[rng.index(consonants.size())];
      w += vowels[rng.index(vowels.size())];
    }
    if (banned.contains(w) || !seen.insert(w).second) continue;
    words.push_back(std::move(w));
  }
  return words;
}

std::string med_line(std::size_t n, std::string_view name, nd::Rng& rng) {
  std::string line = std::to_string(n) + ". " + title_case(name) + " ";
  line += kDoses[rng.index(std::size(kDoses))];
  line += " mg PO ";
  line += kFrequencies[rng.index(std::size(kFrequencies))];
  return line;
}

}  // namespace

SyntheticSpec::SyntheticSpec() {
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    medications[i].triggers = {std::string(kDefaultTriggers[i])};
  }
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); };
  if (num_notes == 0) fail("num_notes must be positive");
  if (tokens_min > tokens_max) fail("tokens_min exceeds tokens_max");
  if (filler_vocab == 0) fail("filler_vocab must be positive");
  if (!is_probability(admission_carryover)) fail("admission_carryover outside [0,1]");
  if (!is_probability(other_med_rate)) fail("other_med_rate outside [0,1]");
  bool any = false;
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    const auto& m = medications[i];
    const std::string who(kMedicationNames[i]);
    if (!is_probability(m.rate) || !is_probability(m.trigger_prob) || !is_probability(m.noise)) {
      fail("probability outside [0,1] for " + who);
    }
    for (const auto& t : m.triggers) {
      if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) {
            return text::is_ascii_digit(c) || (c >= 'a' && c <= 'z');
          })) {
        fail("trigger '" + t + "' for " + who + " must be a lowercase alphanumeric token");
      }
      if (notes::Lexicon::builtin().is_stopword(t)) fail("trigger '" + t + "' is a stopword");
    }
    any = any || m.rate > 0.0;
  }
  for (const auto& g : groups) {
    if (g.members.empty()) fail("group without members");
    for (auto m : g.members) {
      if (m >= kNumMedications) fail("group member index out of range");
    }
    if (!is_probability(g.rate) || !is_probability(g.together)) fail("group probability outside [0,1]");
    any = any || g.rate > 0.0;
  }
  if (!any) fail("every medication rate is zero; no note could carry a label");
}

std::vector<RawNote> generate_synthetic_notes(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto& lex = notes::Lexicon::builtin();
  nd::Rng rng(seed);

  std::vector<std::vector<std::string>> heading_aliases(notes::kNumSectionTypes);
  for (const auto& [alias, type] : lex.section_aliases()) {
    heading_aliases[static_cast<std::size_t>(type)].push_back(alias);
  }
  std::vector<std::vector<std::string>> med_aliases(kNumMedications);
  for (const auto& [toks, med] : lex.medication_aliases()) {
    std::string joined;
    for (const auto& t : toks) joined += (joined.empty() ? "" : " ") + t;
    med_aliases[index_of(med)].push_back(joined);
  }

  std::unordered_set<std::string> banned(lex.stopwords().begin(), lex.stopwords().end());
  for (const auto& [toks, med] : lex.medication_aliases()) banned.insert(toks.begin(), toks.end());
  for (const auto& m : spec.medications) banned.insert(m.triggers.begin(), m.triggers.end());
  for (auto o : kOtherMeds) banned.emplace(o);
  const auto filler = make_filler(spec.filler_vocab, banned, rng);

  auto heading = [&](notes::SectionType t) {
    return title_case(pick(heading_aliases[static_cast<std::size_t>(t)], rng)) + ":\n";
  };

  std::vector<RawNote> out;
  out.reserve(spec.num_notes);
  for (std::size_t n = 0; n < spec.num_notes; ++n) {
    notes::LabelVector labels{};
    do {
      labels = {};
      for (std::size_t i = 0; i < kNumMedications; ++i) labels[i] = rng.bernoulli(spec.medications[i].rate);
      for (const auto& g : spec.groups) {
        if (!rng.bernoulli(g.rate)) continue;
        if (rng.bernoulli(g.together)) {
          for (auto m : g.members) labels[m] = 1;
        } else {
          labels[g.members[rng.index(g.members.size())]] = 1;
        }
      }
    } while (std::all_of(labels.begin(), labels.end(), [](auto b) { return b == 0; }));

    const std::size_t count = spec.tokens_min + rng.index(spec.tokens_max - spec.tokens_min + 1);
    std::vector<std::string> stream;
    stream.reserve(count + 8);
    for (std::size_t i = 0; i < count; ++i) stream.push_back(pick(filler, rng));
    for (std::size_t i = 0; i < kNumMedications; ++i) {
      const auto& m = spec.medications[i];
      if (!rng.bernoulli(labels[i] ? m.trigger_prob : m.noise)) continue;
      for (const auto& t : m.triggers) {
        stream.insert(stream.begin() + static_cast<std::ptrdiff_t>(rng.index(stream.size() + 1)), t);
      }
    }

    // Seven free-text admission sections share the stream; cut points are random.
    constexpr std::size_t kTextSections = 7;
    std::vector<std::size_t> cuts = {0, stream.size()};
    for (std::size_t c = 0; c + 1 < kTextSections; ++c) cuts.push_back(rng.index(stream.size() + 1));
    std::sort(cuts.begin(), cuts.end());

    std::string text = "Admission Date: 2101-01-01\nService: MEDICINE\n";
    for (std::size_t s = 0; s < kTextSections; ++s) {
      text += heading(notes::kAdmissionSections[s]);
      std::string line;
      for (std::size_t i = cuts[s]; i < cuts[s + 1]; ++i) {
        line += stream[i];
        line += ((i - cuts[s]) % 12 == 11) ? '\n' : ' ';
      }
      text += line;
      text += "\n";
    }

    text += heading(notes::SectionType::AdmissionMedications);
    std::size_t k = 0;
    for (std::size_t i = 0; i < kNumMedications; ++i) {
      if (labels[i] && rng.bernoulli(spec.admission_carryover)) {
        text += med_line(++k, pick(med_aliases[i], rng), rng) + "\n";
      }
    }
    for (auto o : kOtherMeds) {
      if (rng.bernoulli(spec.other_med_rate)) text += med_line(++k, o, rng) + "\n";
    }
    if (k == 0) text += "None.\n";

    text += "Brief Hospital Course:\n";
    for (std::size_t i = 0; i < 10; ++i) text += pick(filler, rng) + " ";
    text += "\n";

    text += heading(notes::SectionType::DischargeMedications);
    k = 0;
    for (std::size_t i = 0; i < kNumMedications; ++i) {
      if (labels[i]) text += med_line(++k, pick(med_aliases[i], rng), rng) + "\n";
    }
    for (auto o : kOtherMeds) {
      if (rng.bernoulli(spec.other_med_rate)) text += med_line(++k, o, rng) + "\n";
    }
    text += "Discharge Disposition:\nHome\n";

    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", n + 1);
    out.push_back({id, std::move(text)});
  }
  return out;
}

std::vector<ParsedNote> generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  std::vector<ParsedNote> out;
  for (const auto& raw : generate_synthetic_notes(spec, seed)) {
    auto parsed = notes::parse_note(raw);
    if (!parsed) throw Error(ErrorCode::InvalidSpec, "rendered note " + raw.visit_id + " lost its labels");
    out.push_back(std::move(*parsed));
  }
  return out;
}

}  // namespace medpred::corpus

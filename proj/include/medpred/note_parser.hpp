#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "medpred/medication.hpp"

namespace medpred::notes {

enum class SectionType : int {
  Allergy = 0,
  ChiefComplaint,
  HistoryPresentIllness,
  PastMedicalHistory,
  SocialHistory,
  FamilyHistory,
  InitialExam,
  AdmissionMedications,
  DischargeMedications,
  Other,
};

inline constexpr std::size_t kNumSectionTypes = 10;

// Sections that make up the admission note, in the order they are concatenated.
inline constexpr std::array<SectionType, 8> kAdmissionSections = {
    SectionType::Allergy,           SectionType::ChiefComplaint,
    SectionType::HistoryPresentIllness, SectionType::PastMedicalHistory,
    SectionType::SocialHistory,     SectionType::FamilyHistory,
    SectionType::InitialExam,       SectionType::AdmissionMedications};

std::string_view section_type_name(SectionType type);
std::optional<SectionType> section_type_from_name(std::string_view name);

using LabelVector = std::array<std::uint8_t, kNumMedications>;

struct RawNote {
  std::string visit_id;
  std::string text;
};

struct ParsedNote {
  std::string visit_id;
  std::map<SectionType, std::string> sections;
  std::vector<std::string> tokens;
  std::set<std::string> admission_meds;
  LabelVector labels{};
};

struct Section {
  std::string heading;  // lowercased, trimmed; empty for leading unmatched text
  std::string body;

  bool operator==(const Section&) const = default;
};

// Alias tables and stopwords driving the parser. The built-in tables are compiled
// from data/*.tsv and data/stopwords.txt; load() reads an edited copy at runtime.
class Lexicon {
 public:
  static const Lexicon& builtin();
  static Lexicon load(const std::filesystem::path& dir);
  static Lexicon from_text(std::string_view section_aliases, std::string_view medication_aliases,
                           std::string_view stopwords);

  std::optional<SectionType> classify_heading(std::string_view heading) const;
  bool is_stopword(std::string_view word) const { return stopwords_.contains(std::string(word)); }

  const std::vector<std::pair<std::string, SectionType>>& section_aliases() const {
    return section_alias_list_;
  }
  // Token sequences (already normalized) paired with the medication they name.
  const std::vector<std::pair<std::vector<std::string>, Medication>>& medication_aliases() const {
    return medication_alias_list_;
  }
  const std::unordered_set<std::string>& stopwords() const { return stopwords_; }

 private:
  std::unordered_map<std::string, SectionType> section_aliases_;
  std::vector<std::pair<std::string, SectionType>> section_alias_list_;
  std::vector<std::pair<std::vector<std::string>, Medication>> medication_alias_list_;
  std::unordered_set<std::string> stopwords_;
};

std::vector<Section> split_sections(std::string_view text, const Lexicon& lex = Lexicon::builtin());

std::optional<SectionType> classify_heading(std::string_view heading,
                                            const Lexicon& lex = Lexicon::builtin());

LabelVector extract_discharge_meds(std::string_view body, const Lexicon& lex = Lexicon::builtin());

std::set<std::string> extract_admission_meds(std::string_view body);

std::vector<std::string> normalize_tokens(std::string_view text,
                                          const Lexicon& lex = Lexicon::builtin());

// Throws Error(MalformedNote) on blank text. Returns nullopt for visits without
// any antihypertensive discharge medication.
std::optional<ParsedNote> parse_note(const RawNote& raw, const Lexicon& lex = Lexicon::builtin());

}  // namespace medpred::notes

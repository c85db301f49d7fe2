#pragma once

#include <string_view>

// Contents of data/section_aliases.tsv, data/medication_aliases.tsv and
// data/stopwords.txt, embedded at configure time.
namespace medpred::notes::data {
extern const std::string_view kSectionAliases;
extern const std::string_view kMedicationAliases;
extern const std::string_view kStopwords;
}  // namespace medpred::notes::data

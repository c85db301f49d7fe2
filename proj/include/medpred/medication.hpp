#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace medpred {

// The eight antihypertensive classes, indexed in descending corpus frequency.
enum class Medication : int {
  Metoprolol = 0,
  Furosemide,
  Lisinopril,
  Amlodipine,
  Atenolol,
  Hctz,
  Diltiazem,
  Carvedilol,
};

inline constexpr std::size_t kNumMedications = 8;

inline constexpr std::array<std::string_view, kNumMedications> kMedicationNames = {
    "metoprolol", "furosemide", "lisinopril", "amlodipine",
    "atenolol",   "hctz",       "diltiazem",  "carvedilol"};

inline constexpr std::array<std::string_view, kNumMedications> kMedicationDisplayNames = {
    "Metoprolol", "Furosemide", "Lisinopril", "Amlodipine",
    "Atenolol",   "Hctz",       "Diltiazem",  "Carvedilol"};

constexpr std::size_t index_of(Medication m) { return static_cast<std::size_t>(m); }

inline std::string_view medication_name(Medication m) { return kMedicationNames[index_of(m)]; }

inline std::optional<Medication> medication_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    if (kMedicationNames[i] == name) return static_cast<Medication>(i);
  }
  return std::nullopt;
}

}  // namespace medpred

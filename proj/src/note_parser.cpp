#include "medpred/note_parser.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lexicon_data.hpp"
#include "medpred/error.hpp"
#include "text_util.hpp"

namespace medpred::notes {

namespace {

constexpr std::array<std::string_view, kNumSectionTypes> kSectionTypeNames = {
    "Allergy",       "ChiefComplaint", "HistoryPresentIllness", "PastMedicalHistory",
    "SocialHistory", "FamilyHistory",  "InitialExam",           "AdmissionMedications",
    "DischargeMedications", "Other"};

// Lowercased alphanumeric runs, no stopword filtering.
std::vector<std::string> word_runs(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (text::is_ascii_alnum(ch)) {
      cur.push_back(text::ascii_lower(ch));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename Fn>
void for_each_entry(std::string_view content, Fn&& fn) {
  for (std::string_view line : text::split_lines(content)) {
    std::string_view trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    fn(trimmed);
  }
}

std::pair<std::string_view, std::string_view> split_tab(std::string_view line) {
  auto tab = line.find('\t');
  if (tab == std::string_view::npos) {
    throw Error(ErrorCode::Format, "expected tab-separated entry: '" + std::string(line) + "'");
  }
  return {text::trim(line.substr(0, tab)), text::trim(line.substr(tab + 1))};
}

}  // namespace

std::string_view section_type_name(SectionType type) {
  return kSectionTypeNames[static_cast<std::size_t>(type)];
}

std::optional<SectionType> section_type_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumSectionTypes; ++i) {
    if (kSectionTypeNames[i] == name) return static_cast<SectionType>(i);
  }
  return std::nullopt;
}

Lexicon Lexicon::from_text(std::string_view section_aliases, std::string_view medication_aliases,
                           std::string_view stopwords) {
  Lexicon lex;
  for_each_entry(section_aliases, [&](std::string_view line) {
    auto [alias_raw, type_name] = split_tab(line);
    auto type = section_type_from_name(type_name);
    if (!type) throw Error(ErrorCode::Format, "unknown section type '" + std::string(type_name) + "'");
    std::string alias = text::to_lower(alias_raw);
    auto [it, inserted] = lex.section_aliases_.emplace(alias, *type);
    if (!inserted && it->second != *type) {
      throw Error(ErrorCode::Format, "alias '" + alias + "' maps to two section types");
    }
    if (inserted) lex.section_alias_list_.emplace_back(alias, *type);
  });
  for_each_entry(medication_aliases, [&](std::string_view line) {
    auto [alias, med_name] = split_tab(line);
    auto med = medication_from_name(text::to_lower(med_name));
    if (!med) throw Error(ErrorCode::Format, "unknown medication '" + std::string(med_name) + "'");
    auto words = word_runs(alias);
    if (words.empty()) throw Error(ErrorCode::Format, "empty medication alias");
    lex.medication_alias_list_.emplace_back(std::move(words), *med);
  });
  for_each_entry(stopwords, [&](std::string_view line) { lex.stopwords_.insert(text::to_lower(line)); });
  return lex;
}

const Lexicon& Lexicon::builtin() {
  static const Lexicon lex =
      from_text(data::kSectionAliases, data::kMedicationAliases, data::kStopwords);
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& dir) {
  return from_text(read_file(dir / "section_aliases.tsv"), read_file(dir / "medication_aliases.tsv"),
                   read_file(dir / "stopwords.txt"));
}

std::optional<SectionType> Lexicon::classify_heading(std::string_view heading) const {
  auto it = section_aliases_.find(std::string(heading));
  if (it == section_aliases_.end()) return std::nullopt;
  return it->second;
}

std::optional<SectionType> classify_heading(std::string_view heading, const Lexicon& lex) {
  return lex.classify_heading(heading);
}

std::vector<Section> split_sections(std::string_view text, const Lexicon& lex) {
  std::vector<Section> sections;
  std::string leading;
  std::string* body = &leading;

  for (std::string_view line : text::split_lines(text)) {
    auto colon = line.find(':');
    if (colon != std::string_view::npos) {
      std::string heading = text::to_lower(text::trim(line.substr(0, colon)));
      if (!heading.empty() && lex.classify_heading(heading)) {
        sections.push_back({std::move(heading), std::string(line.substr(colon + 1))});
        body = &sections.back().body;
        continue;
      }
    }
    // `body` may point into `sections`; it is re-derived after every push_back.
    if (!body->empty()) body->push_back('\n');
    body->append(line);
  }

  for (auto& s : sections) s.body = std::string(text::trim(s.body));
  std::string lead = std::string(text::trim(leading));
  if (!lead.empty()) sections.insert(sections.begin(), Section{"", std::move(lead)});
  return sections;
}

LabelVector extract_discharge_meds(std::string_view body, const Lexicon& lex) {
  LabelVector labels{};
  auto words = word_runs(body);
  for (const auto& [alias, med] : lex.medication_aliases()) {
    if (labels[index_of(med)]) continue;
    auto hit = std::search(words.begin(), words.end(), alias.begin(), alias.end());
    if (hit != words.end()) labels[index_of(med)] = 1;
  }
  return labels;
}

std::set<std::string> extract_admission_meds(std::string_view body) {
  std::set<std::string> meds;
  for (std::string_view line : text::split_lines(body)) {
    std::string_view rest = text::trim(line);
    // Bullet marker: "12." / "3)" / "-" / "*".
    std::size_t i = 0;
    while (i < rest.size() && text::is_ascii_digit(rest[i])) ++i;
    if (i > 0 && i < rest.size() && (rest[i] == '.' || rest[i] == ')')) {
      rest.remove_prefix(i + 1);
    } else if (!rest.empty() && (rest.front() == '-' || rest.front() == '*')) {
      rest.remove_prefix(1);
    }
    auto first = std::find_if(rest.begin(), rest.end(), text::is_ascii_alpha);
    if (first == rest.end()) continue;
    auto last = std::find_if_not(first, rest.end(), text::is_ascii_alpha);
    meds.insert(text::to_lower(std::string_view(&*first, static_cast<std::size_t>(last - first))));
  }
  return meds;
}

std::vector<std::string> normalize_tokens(std::string_view text, const Lexicon& lex) {
  auto words = word_runs(text);
  std::erase_if(words, [&](const std::string& w) { return lex.is_stopword(w); });
  return words;
}

std::optional<ParsedNote> parse_note(const RawNote& raw, const Lexicon& lex) {
  if (text::trim(raw.text).empty()) {
    throw Error(ErrorCode::MalformedNote, "visit '" + raw.visit_id + "' has empty text");
  }

  std::array<std::vector<std::string_view>, kNumSectionTypes> bodies;
  auto sections = split_sections(raw.text, lex);
  for (const auto& s : sections) {
    SectionType type = s.heading.empty() ? SectionType::Other : *lex.classify_heading(s.heading);
    bodies[static_cast<std::size_t>(type)].push_back(s.body);
  }

  ParsedNote note;
  note.visit_id = raw.visit_id;
  for (const auto& body : bodies[static_cast<std::size_t>(SectionType::DischargeMedications)]) {
    auto found = extract_discharge_meds(body, lex);
    for (std::size_t i = 0; i < kNumMedications; ++i) note.labels[i] |= found[i];
  }
  if (std::none_of(note.labels.begin(), note.labels.end(), [](auto b) { return b != 0; })) {
    return std::nullopt;
  }

  for (std::size_t t = 0; t < kNumSectionTypes; ++t) {
    if (bodies[t].empty()) continue;
    std::string joined;
    for (const auto& b : bodies[t]) {
      if (!joined.empty()) joined.push_back('\n');
      joined.append(b);
    }
    note.sections.emplace(static_cast<SectionType>(t), std::move(joined));
  }
  for (SectionType type : kAdmissionSections) {
    for (const auto& body : bodies[static_cast<std::size_t>(type)]) {
      auto toks = normalize_tokens(body, lex);
      note.tokens.insert(note.tokens.end(), std::make_move_iterator(toks.begin()),
                         std::make_move_iterator(toks.end()));
    }
  }
  for (const auto& body : bodies[static_cast<std::size_t>(SectionType::AdmissionMedications)]) {
    note.admission_meds.merge(extract_admission_meds(body));
  }
  return note;
}

}  // namespace medpred::notes

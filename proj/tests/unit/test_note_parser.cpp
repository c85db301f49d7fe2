#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "medpred/error.hpp"
#include "medpred/note_parser.hpp"

using namespace medpred;
using namespace medpred::notes;

namespace {

LabelVector bits(std::initializer_list<Medication> meds) {
  LabelVector v{};
  for (auto m : meds) v[index_of(m)] = 1;
  return v;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

TEST_CASE("split_sections") {
  CHECK(split_sections("").empty());

  auto s = split_sections("Chief Complaint:\nchest pain\nHPI:\nworsening dyspnea");
  REQUIRE(s.size() == 2);
  CHECK(s[0] == Section{"chief complaint", "chest pain"});
  CHECK(s[1] == Section{"hpi", "worsening dyspnea"});

  auto none = split_sections("no headings here\njust text");
  REQUIRE(none.size() == 1);
  CHECK(none[0] == Section{"", "no headings here\njust text"});

  SUBCASE("unrecognized colon lines stay in the body") {
    auto t = split_sections("Physical Exam:\nBP: 120/80\nHR: 88");
    REQUIRE(t.size() == 1);
    CHECK(t[0].heading == "physical exam");
    CHECK(t[0].body == "BP: 120/80\nHR: 88");
  }
  SUBCASE("text on the heading line belongs to the section") {
    auto t = split_sections("preamble\nAllergies: Penicillins\nHistory: smoker");
    REQUIRE(t.size() == 3);
    CHECK(t[0] == Section{"", "preamble"});
    CHECK(t[1] == Section{"allergies", "Penicillins"});
    CHECK(t[2] == Section{"history", "smoker"});
  }
}

TEST_CASE("split_sections round trip keeps every non-heading word") {
  const std::string note =
      "Admission Date: 2101-10-20\nService: MEDICINE\nAllergies:\nPatient recorded as having No Known "
      "Allergies\nChief Complaint:\nshortness of breath\nHistory of Present Illness:\n72 yo M with "
      "CHF, EF 25%.\nBP: 150/90 on arrival.\nPast Medical History:\nHTN, DM2\nSocial History:\n"
      "lives alone\nFamily History:\nnoncontributory\nPhysical Exam:\nJVP elevated\nMedications on "
      "Admission:\n1. Lasix 40 mg daily\nBrief Hospital Course:\ndiuresed\nDischarge "
      "Medications:\n1. Furosemide 40 mg PO daily\n2. Metoprolol 25 mg BID\n";
  std::vector<std::string> expected;
  for (auto line : words(note)) expected.push_back(line);
  // Remove heading words (text before the first colon on heading lines).
  std::vector<std::string> body_words;
  for (const auto& s : split_sections(note)) {
    for (auto& w : words(s.body)) body_words.push_back(w);
  }
  std::vector<std::string> stripped;
  std::istringstream lines(note);
  std::string line;
  while (std::getline(lines, line)) {
    auto colon = line.find(':');
    std::string kept = line;
    if (colon != std::string::npos) {
      std::string head = line.substr(0, colon);
      std::transform(head.begin(), head.end(), head.begin(), ::tolower);
      while (!head.empty() && head.back() == ' ') head.pop_back();
      if (classify_heading(head)) kept = line.substr(colon + 1);
    }
    for (auto& w : words(kept)) stripped.push_back(w);
  }
  CHECK(body_words == stripped);
}

TEST_CASE("classify_heading") {
  CHECK(classify_heading("hpi") == SectionType::HistoryPresentIllness);
  CHECK(classify_heading("meds on discharge") == SectionType::DischargeMedications);
  CHECK(classify_heading("discharge medications") == SectionType::DischargeMedications);
  CHECK_FALSE(classify_heading("operative report").has_value());

  // Every heading string listed for the admission information types.
  const std::pair<const char*, SectionType> table[] = {
      {"allergies", SectionType::Allergy},
      {"chief complaint", SectionType::ChiefComplaint},
      {"history of present illness", SectionType::HistoryPresentIllness},
      {"hpi", SectionType::HistoryPresentIllness},
      {"past medical history", SectionType::PastMedicalHistory},
      {"major surgical or invasive procedure", SectionType::PastMedicalHistory},
      {"social history", SectionType::SocialHistory},
      {"history", SectionType::SocialHistory},
      {"family history", SectionType::FamilyHistory},
      {"family hx", SectionType::FamilyHistory},
      {"admission labs", SectionType::InitialExam},
      {"physical exam", SectionType::InitialExam},
      {"admission medications", SectionType::AdmissionMedications},
      {"meds on admission", SectionType::AdmissionMedications},
  };
  for (const auto& [alias, type] : table) {
    CAPTURE(alias);
    CHECK(classify_heading(alias) == type);
  }
}

TEST_CASE("lexicon validation") {
  CHECK_THROWS_AS(Lexicon::from_text("history\tSocialHistory\nhistory\tFamilyHistory\n", "", ""),
                  Error);
  CHECK_THROWS_AS(Lexicon::from_text("history\tNoSuchType\n", "", ""), Error);
  CHECK_THROWS_AS(Lexicon::from_text("", "toprol\tnosuchmed\n", ""), Error);

  auto shipped = Lexicon::load(MEDPRED_SOURCE_DIR "/data");
  CHECK(shipped.section_aliases() == Lexicon::builtin().section_aliases());
  CHECK(shipped.stopwords() == Lexicon::builtin().stopwords());
}

TEST_CASE("extract_discharge_meds") {
  CHECK(extract_discharge_meds("1. Lasix 40mg PO daily") == bits({Medication::Furosemide}));
  CHECK(extract_discharge_meds("1. Lopressor 25mg BID\n2. Norvasc 5mg") ==
        bits({Medication::Metoprolol, Medication::Amlodipine}));
  CHECK(extract_discharge_meds("1. aspirin 81mg") == LabelVector{});
  CHECK(extract_discharge_meds("lisinopril-hydrochlorothiazide 20-25 mg") ==
        bits({Medication::Lisinopril, Medication::Hctz}));
  // Whole words only.
  CHECK(extract_discharge_meds("metoprololx 5 mg") == LabelVector{});
  CHECK(extract_discharge_meds("HCTZ 25") == bits({Medication::Hctz}));

  SUBCASE("idempotent and independent of bullet order") {
    std::vector<std::string> bullets = {"Carvedilol 3.125 mg BID", "aspirin 81", "Diltiazem ER 120",
                                        "Atenolol 50 mg", "senna"};
    std::string joined;
    for (auto& b : bullets) joined += b + "\n";
    const auto ref = extract_discharge_meds(joined);
    CHECK(extract_discharge_meds(joined) == ref);
    std::mt19937 gen(7);
    for (int trial = 0; trial < 20; ++trial) {
      std::shuffle(bullets.begin(), bullets.end(), gen);
      std::string s;
      for (auto& b : bullets) s += b + "\n";
      CHECK(extract_discharge_meds(s) == ref);
    }
  }
}

TEST_CASE("extract_admission_meds") {
  CHECK(extract_admission_meds("").empty());
  CHECK(extract_admission_meds("1. Metoprolol 50mg PO BID") == std::set<std::string>{"metoprolol"});
  CHECK(extract_admission_meds("1. ASA 81mg\n2. lisinopril 10mg") ==
        std::set<std::string>{"asa", "lisinopril"});
  CHECK(extract_admission_meds("- Coumadin 5 mg\n* Lasix\n\n3) 12.5 HCTZ") ==
        std::set<std::string>{"coumadin", "lasix", "hctz"});
}

TEST_CASE("normalize_tokens") {
  CHECK(normalize_tokens("The patient HAS hypertension.") ==
        std::vector<std::string>{"patient", "hypertension"});
  CHECK(normalize_tokens("").empty());
  CHECK(normalize_tokens("ESRD/HD") == std::vector<std::string>{"esrd", "hd"});

  SUBCASE("idempotent on random text") {
    std::mt19937 gen(11);
    const std::string alphabet = "abcXYZ019 .,/-:;()THEthe\n";
    for (int trial = 0; trial < 200; ++trial) {
      std::string s;
      for (int i = 0; i < 60; ++i) s.push_back(alphabet[gen() % alphabet.size()]);
      auto once = normalize_tokens(s);
      std::string joined;
      for (auto& w : once) joined += w + " ";
      CHECK(normalize_tokens(joined) == once);
      for (auto& w : once) {
        CHECK_FALSE(Lexicon::builtin().is_stopword(w));
        CHECK(std::none_of(w.begin(), w.end(), [](char c) { return c >= 'A' && c <= 'Z'; }));
      }
    }
  }
}

TEST_CASE("parse_note") {
  RawNote raw{"v1",
              "HPI:\nThe patient has worsening edema\nMedications on Admission:\n1. Aspirin 81 mg\n"
              "Discharge Medications:\n1. Lasix 20 mg daily\n"};
  auto parsed = parse_note(raw);
  REQUIRE(parsed.has_value());
  CHECK(parsed->visit_id == "v1");
  CHECK(parsed->labels == bits({Medication::Furosemide}));
  CHECK(parsed->tokens == std::vector<std::string>{"patient", "worsening", "edema", "1", "aspirin",
                                                   "81", "mg"});
  CHECK(parsed->admission_meds == std::set<std::string>{"aspirin"});
  CHECK(parsed->sections.at(SectionType::HistoryPresentIllness) == "The patient has worsening edema");

  CHECK_FALSE(parse_note({"v2", "HPI:\nchest pain\n"}).has_value());
  CHECK_FALSE(parse_note({"v3", "HPI:\nchest pain\nMeds on Admission:\n1. metoprolol 25\n"
                                "Discharge Medications:\n1. aspirin\n"})
                   .has_value());
  CHECK_THROWS_AS(parse_note({"v4", "  \n "}), Error);
  try {
    parse_note({"v4", ""});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedNote);
  }

  SUBCASE("admission sections are concatenated in canonical order") {
    RawNote r{"v5",
              "Physical Exam:\nexamfinding\nChief Complaint:\nccword\nAllergies:\nallergyword\n"
              "Discharge Medications:\nnorvasc\n"};
    auto p = parse_note(r);
    REQUIRE(p);
    CHECK(p->tokens == std::vector<std::string>{"allergyword", "ccword", "examfinding"});
  }
}

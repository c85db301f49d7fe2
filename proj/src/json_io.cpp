#include "medpred/json_io.hpp"

#include <fstream>
#include <sstream>

#include "medpred/error.hpp"
#include "text_util.hpp"

namespace medpred {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<json> parse_jsonl(std::string_view text) {
  std::vector<json> rows;
  std::size_t lineno = 0;
  for (auto line : text::split_lines(text)) {
    ++lineno;
    line = text::trim(line);
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Format, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::string dump_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

std::string dump_pretty(const json& j) { return j.dump(2) + "\n"; }

namespace notes {

void to_json(json& j, const RawNote& n) { j = json{{"visit_id", n.visit_id}, {"text", n.text}}; }

void from_json(const json& j, RawNote& n) {
  j.at("visit_id").get_to(n.visit_id);
  j.at("text").get_to(n.text);
}

void to_json(json& j, const ParsedNote& n) {
  json sections = json::object();
  for (const auto& [type, body] : n.sections) sections[std::string(section_type_name(type))] = body;
  j = json{{"visit_id", n.visit_id},
           {"sections", std::move(sections)},
           {"tokens", n.tokens},
           {"admission_meds", n.admission_meds},
           {"labels", n.labels}};
}

void from_json(const json& j, ParsedNote& n) {
  j.at("visit_id").get_to(n.visit_id);
  n.sections.clear();
  if (j.contains("sections")) {
    for (const auto& [name, body] : j.at("sections").items()) {
      auto type = section_type_from_name(name);
      if (!type) throw Error(ErrorCode::Format, "unknown section type '" + name + "'");
      n.sections[*type] = body.get<std::string>();
    }
  }
  j.at("tokens").get_to(n.tokens);
  n.admission_meds = j.value("admission_meds", std::set<std::string>{});
  const auto& labels = j.at("labels");
  if (!labels.is_array() || labels.size() != kNumMedications) {
    throw Error(ErrorCode::Format, "labels must be an array of 8 bits");
  }
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    const int b = labels[i].get<int>();
    if (b != 0 && b != 1) throw Error(ErrorCode::Format, "labels must be 0/1");
    n.labels[i] = static_cast<std::uint8_t>(b);
  }
}

}  // namespace notes

namespace corpus {

void to_json(json& j, const SparseVector& v) { j = json{{"i", v.index}, {"v", v.value}}; }

void from_json(const json& j, SparseVector& v) {
  j.at("i").get_to(v.index);
  j.at("v").get_to(v.value);
  if (v.index.size() != v.value.size()) throw Error(ErrorCode::Format, "sparse vector length mismatch");
}

void to_json(json& j, const EncodedExample& e) {
  // Only the non-pad prefix is stored.
  std::vector<std::int32_t> tokens(e.token_indices.begin(),
                                   e.token_indices.begin() + static_cast<std::ptrdiff_t>(e.length));
  j = json{{"visit_id", e.visit_id}, {"tokens", std::move(tokens)}, {"tfidf", e.tfidf},
           {"labels", e.labels},     {"admission", e.admission}};
}

void from_json(const json& j, EncodedExample& e) {
  j.at("visit_id").get_to(e.visit_id);
  j.at("tokens").get_to(e.token_indices);
  e.length = e.token_indices.size();
  j.at("tfidf").get_to(e.tfidf);
  j.at("labels").get_to(e.labels);
  j.at("admission").get_to(e.admission);
}

void to_json(json& j, const CorpusConfig& c) {
  j = json{{"min_count", c.min_count},
           {"max_length", c.max_length},
           {"tfidf_dim", c.tfidf_dim},
           {"min_tokens", c.min_tokens}};
}

void from_json(const json& j, CorpusConfig& c) {
  c.min_count = j.value("min_count", c.min_count);
  c.max_length = j.value("max_length", c.max_length);
  c.tfidf_dim = j.value("tfidf_dim", c.tfidf_dim);
  c.min_tokens = j.value("min_tokens", c.min_tokens);
}

namespace {

std::size_t medication_ref(const json& j) {
  if (j.is_number_integer()) {
    const auto i = j.get<long long>();
    if (i < 0 || i >= static_cast<long long>(kNumMedications)) {
      throw Error(ErrorCode::InvalidSpec, "medication index out of range");
    }
    return static_cast<std::size_t>(i);
  }
  const auto name = text::to_lower(j.get<std::string>());
  auto med = medication_from_name(name);
  if (!med) throw Error(ErrorCode::InvalidSpec, "unknown medication '" + name + "'");
  return index_of(*med);
}

void read_medication(const json& j, SyntheticMedication& m) {
  m.rate = j.value("rate", m.rate);
  if (j.contains("triggers")) j.at("triggers").get_to(m.triggers);
  m.trigger_prob = j.value("trigger_prob", m.trigger_prob);
  m.noise = j.value("noise", m.noise);
}

}  // namespace

void to_json(json& j, const SyntheticSpec& s) {
  json meds = json::object();
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    const auto& m = s.medications[i];
    meds[std::string(kMedicationNames[i])] = json{
        {"rate", m.rate}, {"triggers", m.triggers}, {"trigger_prob", m.trigger_prob}, {"noise", m.noise}};
  }
  json groups = json::array();
  for (const auto& g : s.groups) {
    json members = json::array();
    for (auto m : g.members) members.push_back(std::string(kMedicationNames[m]));
    groups.push_back(json{{"members", members}, {"rate", g.rate}, {"together", g.together}});
  }
  j = json{{"num_notes", s.num_notes},
           {"tokens_min", s.tokens_min},
           {"tokens_max", s.tokens_max},
           {"filler_vocab", s.filler_vocab},
           {"admission_carryover", s.admission_carryover},
           {"other_med_rate", s.other_med_rate},
           {"medications", std::move(meds)},
           {"groups", std::move(groups)}};
}

void from_json(const json& j, SyntheticSpec& s) {
  try {
    s.num_notes = j.value("num_notes", s.num_notes);
    s.tokens_min = j.value("tokens_min", s.tokens_min);
    s.tokens_max = j.value("tokens_max", s.tokens_max);
    s.filler_vocab = j.value("filler_vocab", s.filler_vocab);
    s.admission_carryover = j.value("admission_carryover", s.admission_carryover);
    s.other_med_rate = j.value("other_med_rate", s.other_med_rate);
    if (j.contains("default_rate")) {
      for (auto& m : s.medications) m.rate = j.at("default_rate").get<double>();
    }
    if (j.contains("medications")) {
      const auto& meds = j.at("medications");
      if (meds.is_array()) {
        if (meds.size() != kNumMedications) throw Error(ErrorCode::InvalidSpec, "need 8 medication entries");
        for (std::size_t i = 0; i < kNumMedications; ++i) read_medication(meds[i], s.medications[i]);
      } else {
        for (const auto& [name, m] : meds.items()) read_medication(m, s.medications[medication_ref(name)]);
      }
    }
    if (j.contains("groups")) {
      s.groups.clear();
      for (const auto& g : j.at("groups")) {
        SyntheticGroup grp;
        for (const auto& m : g.at("members")) grp.members.push_back(medication_ref(m));
        grp.rate = g.value("rate", grp.rate);
        grp.together = g.value("together", grp.together);
        s.groups.push_back(std::move(grp));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, e.what());
  }
  s.validate();
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  json splits = json{{"train", ds.split.train}, {"validation", ds.split.validation}, {"test", ds.split.test}};
  json j = json{{"config", ds.config},
                {"seed", ds.seed},
                {"vocab_size", ds.vocab.size()},
                {"vocab_hash", ds.vocab.hash()},
                {"tfidf", json{{"features", ds.tfidf.features()}, {"idf", ds.tfidf.idf()}}},
                {"med_vocab", ds.med_vocab},
                {"dropped_short", ds.dropped_short},
                {"splits", std::move(splits)}};
  write_file(dir / "vocab.tsv", ds.vocab.to_text());
  write_file(dir / "dataset.json", j.dump() + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.vocab = Vocabulary::from_text(read_file(dir / "vocab.tsv"));
  try {
    const json j = json::parse(read_file(dir / "dataset.json"));
    ds.config = j.at("config").get<CorpusConfig>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    if (j.at("vocab_hash").get<std::uint64_t>() != ds.vocab.hash()) {
      throw Error(ErrorCode::Format, "vocab.tsv does not match dataset.json");
    }
    ds.tfidf = TfidfVectorizer(j.at("tfidf").at("features").get<std::vector<std::string>>(),
                               j.at("tfidf").at("idf").get<std::vector<double>>());
    j.at("med_vocab").get_to(ds.med_vocab);
    ds.dropped_short = j.value("dropped_short", std::size_t{0});
    ds.split.seed = ds.seed;
    const auto& s = j.at("splits");
    s.at("train").get_to(ds.split.train);
    s.at("validation").get_to(ds.split.validation);
    s.at("test").get_to(ds.split.test);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("dataset.json: ") + e.what());
  }
  // Re-pad to L.
  for (auto* part : {&ds.split.train, &ds.split.validation, &ds.split.test}) {
    for (auto& e : *part) {
      if (e.length > ds.config.max_length) throw Error(ErrorCode::Format, "example longer than max_length");
      for (auto t : e.token_indices) {
        if (t < 0 || static_cast<std::size_t>(t) >= ds.vocab.size()) {
          throw Error(ErrorCode::Format, "token index out of vocabulary range");
        }
      }
      e.token_indices.resize(ds.config.max_length, kPadIndex);
    }
  }
  return ds;
}

}  // namespace corpus

}  // namespace medpred

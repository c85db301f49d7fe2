#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medpred/corpus.hpp"
#include "medpred/note_parser.hpp"

namespace medpred {

using json = nlohmann::json;

// Throws Error(Io).
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Throws Error(Format) with the offending line number.
std::vector<json> parse_jsonl(std::string_view text);
std::string dump_jsonl(const std::vector<json>& rows);

// Stable formatting for files that must be byte-identical across runs.
std::string dump_pretty(const json& j);

namespace notes {
void to_json(json& j, const RawNote& n);
void from_json(const json& j, RawNote& n);
void to_json(json& j, const ParsedNote& n);
void from_json(const json& j, ParsedNote& n);
}  // namespace notes

namespace corpus {
void to_json(json& j, const SparseVector& v);
void from_json(const json& j, SparseVector& v);
void to_json(json& j, const EncodedExample& e);
void from_json(const json& j, EncodedExample& e);
void to_json(json& j, const CorpusConfig& c);
void from_json(const json& j, CorpusConfig& c);
void to_json(json& j, const SyntheticSpec& s);
// Missing keys keep their defaults; medications may be keyed by name.
void from_json(const json& j, SyntheticSpec& s);

// dataset.json + vocab.tsv inside `dir`.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
}  // namespace corpus

}  // namespace medpred

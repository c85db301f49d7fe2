#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medpred/analysis.hpp"
#include "medpred/baselines.hpp"
#include "medpred/corpus.hpp"
#include "medpred/json_io.hpp"
#include "medpred/model.hpp"

// End-to-end runs: one output directory per seed under RunConfig::output_dir.
//   <out>/seed_<s>/data/         vocab.tsv, dataset.json
//   <out>/seed_<s>/model.ckpt    tensors
//   <out>/seed_<s>/model.json    sidecar
//   <out>/seed_<s>/eval_<split>/ metrics.json, f1_table.*, predictions.jsonl, ...
//   <out>/seed_<s>/analysis/     neighbors.csv, filter_ngrams.csv, tsne.csv
//   <out>/manifest.json
namespace medpred::pipeline {

enum class ModelKind { Cnn, Lr, Mlp };
std::string_view model_kind_name(ModelKind k);
ModelKind model_kind_from_name(std::string_view name);  // throws Config

struct AnalysisOptions {
  std::vector<std::string> neighbor_queries;  // empty: the most frequent words
  std::size_t neighbor_count = 20;
  std::size_t top_n = 5;
  bool tsne = true;
  std::size_t tsne_max_points = 2000;
  analysis::TsneConfig tsne_config;
};

struct RunConfig {
  std::string input;                 // notes file; empty when `synthetic` is set
  std::string input_format = "parsed";  // "parsed" or "raw"
  std::optional<corpus::SyntheticSpec> synthetic;
  std::uint64_t synthetic_seed = 0;
  std::string output_dir = "runs/default";
  ModelKind model = ModelKind::Cnn;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  corpus::CorpusConfig corpus;
  model::CnnConfig cnn;
  baselines::LrConfig lr;
  baselines::MlpConfig mlp;
  bool pmi_normalized = false;
  bool identity_cov_x = false;
  AnalysisOptions analysis;

  // Throws Config: empty seed list, no input, missing input file, bad values.
  void validate() const;
};

json to_json(const RunConfig& c);
RunConfig config_from_json(const json& j);

// Applies `a.b.c=value` overrides to a config document. The value is read as
// JSON when it parses, otherwise as a string.
void apply_override(json& doc, std::string_view assignment);

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

struct ParseSummary {
  std::size_t total = 0, parsed = 0, no_label = 0, malformed = 0;
};

// Raw notes JSONL in, ParsedNote JSONL out.
ParseSummary parse_notes_file(const std::filesystem::path& in, const std::filesystem::path& out);

std::vector<notes::ParsedNote> load_notes(const RunConfig& c);

std::filesystem::path seed_dir(const RunConfig& c, std::uint64_t seed);

corpus::Dataset build_seed(const RunConfig& c, std::uint64_t seed);

// Builds (or reuses) the dataset, trains the configured model, writes the
// checkpoint and sidecar, and returns the sidecar. Training time is returned
// through `seconds` rather than written, so outputs stay reproducible.
json train_seed(const RunConfig& c, std::uint64_t seed, double* seconds = nullptr);

// Writes eval_<split>/ and returns metrics.json's content.
json eval_seed(const RunConfig& c, std::uint64_t seed, const std::string& split = "test");

// CNN only; refuses untrained checkpoints (Config).
void analyze_seed(const RunConfig& c, std::uint64_t seed);

// Aggregates eval_<split>/metrics.json over seeds into manifest.json.
json report(const RunConfig& c, const std::string& split = "test");

// Mean and sample standard deviation per numeric leaf of the metric reports;
// std is null with fewer than two reports.
json aggregate_reports(const std::vector<json>& reports);

// Everything for every seed: train, eval, (CNN) analyze, then report.
json run_all(const RunConfig& c);

}  // namespace medpred::pipeline

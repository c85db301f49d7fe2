#include "medpred/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "medpred/error.hpp"
#include "medpred/metrics.hpp"
#include "medpred/serialize.hpp"

namespace medpred::pipeline {

namespace fs = std::filesystem;

std::string_view model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Cnn: return "cnn";
    case ModelKind::Lr: return "lr";
    case ModelKind::Mlp: return "mlp";
  }
  return "?";
}

ModelKind model_kind_from_name(std::string_view name) {
  for (auto k : {ModelKind::Cnn, ModelKind::Lr, ModelKind::Mlp}) {
    if (model_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::Config, "unknown model kind '" + std::string(name) + "' (cnn, lr, mlp)");
}

namespace {

std::string display_name(ModelKind k) {
  switch (k) {
    case ModelKind::Cnn: return "CNN";
    case ModelKind::Lr: return "LR";
    case ModelKind::Mlp: return "MLP";
  }
  return "?";
}

}  // namespace

void RunConfig::validate() const {
  if (seeds.empty()) throw Error(ErrorCode::Config, "seed list is empty");
  if (input.empty() == !synthetic.has_value()) {
    throw Error(ErrorCode::Config, "set exactly one of 'input' and 'synthetic'");
  }
  if (!input.empty() && !fs::exists(input)) throw Error(ErrorCode::Config, "input file not found: " + input);
  if (input_format != "parsed" && input_format != "raw") {
    throw Error(ErrorCode::Config, "input_format must be 'parsed' or 'raw'");
  }
  if (synthetic) synthetic->validate();
  if (corpus.max_length == 0 || corpus.tfidf_dim == 0) {
    throw Error(ErrorCode::Config, "corpus.max_length and corpus.tfidf_dim must be positive");
  }
  if (output_dir.empty()) throw Error(ErrorCode::Config, "output_dir is empty");
  cnn.validate();
  if (analysis.top_n == 0) throw Error(ErrorCode::Config, "analysis.top_n must be positive");
}

json to_json(const RunConfig& c) {
  json synth = nullptr;
  if (c.synthetic) synth = *c.synthetic;
  return json{{"input", c.input},
              {"input_format", c.input_format},
              {"synthetic", synth},
              {"synthetic_seed", c.synthetic_seed},
              {"output_dir", c.output_dir},
              {"model", std::string(model_kind_name(c.model))},
              {"seeds", c.seeds},
              {"corpus", c.corpus},
              {"cnn", c.cnn},
              {"lr", c.lr},
              {"mlp", c.mlp},
              {"metrics", json{{"pmi_normalized", c.pmi_normalized}, {"identity_cov_x", c.identity_cov_x}}},
              {"analysis", json{{"neighbor_queries", c.analysis.neighbor_queries},
                                {"neighbor_count", c.analysis.neighbor_count},
                                {"top_n", c.analysis.top_n},
                                {"tsne", c.analysis.tsne},
                                {"tsne_max_points", c.analysis.tsne_max_points},
                                {"tsne_config", c.analysis.tsne_config}}}};
}

RunConfig config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"input", "input_format", "synthetic", "synthetic_seed", "output_dir", "model", "seeds",
                       "corpus", "cnn", "lr", "mlp", "metrics", "analysis"},
                      "run config");
  RunConfig c;
  try {
    c.input = j.value("input", c.input);
    c.input_format = j.value("input_format", c.input_format);
    if (j.contains("synthetic") && !j.at("synthetic").is_null()) {
      c.synthetic = j.at("synthetic").get<corpus::SyntheticSpec>();
    }
    c.synthetic_seed = j.value("synthetic_seed", c.synthetic_seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("model")) c.model = model_kind_from_name(j.at("model").get<std::string>());
    if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
    if (j.contains("corpus")) {
      reject_unknown_keys(j.at("corpus"), {"min_count", "max_length", "tfidf_dim", "min_tokens"}, "corpus config");
      c.corpus = j.at("corpus").get<corpus::CorpusConfig>();
    }
    if (j.contains("cnn")) c.cnn = j.at("cnn").get<model::CnnConfig>();
    if (j.contains("lr")) c.lr = j.at("lr").get<baselines::LrConfig>();
    if (j.contains("mlp")) c.mlp = j.at("mlp").get<baselines::MlpConfig>();
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      reject_unknown_keys(m, {"pmi_normalized", "identity_cov_x"}, "metrics config");
      c.pmi_normalized = m.value("pmi_normalized", c.pmi_normalized);
      c.identity_cov_x = m.value("identity_cov_x", c.identity_cov_x);
    }
    if (j.contains("analysis")) {
      const auto& a = j.at("analysis");
      reject_unknown_keys(a, {"neighbor_queries", "neighbor_count", "top_n", "tsne", "tsne_max_points", "tsne_config"},
                          "analysis config");
      if (a.contains("neighbor_queries")) a.at("neighbor_queries").get_to(c.analysis.neighbor_queries);
      c.analysis.neighbor_count = a.value("neighbor_count", c.analysis.neighbor_count);
      c.analysis.top_n = a.value("top_n", c.analysis.top_n);
      c.analysis.tsne = a.value("tsne", c.analysis.tsne);
      c.analysis.tsne_max_points = a.value("tsne_max_points", c.analysis.tsne_max_points);
      if (a.contains("tsne_config")) c.analysis.tsne_config = a.at("tsne_config").get<analysis::TsneConfig>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("run config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidSpec) throw Error(ErrorCode::Config, e.what());
    throw;
  }
  return c;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorCode::Config, "override must look like key.path=value: " + std::string(assignment));
  }
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw Error(ErrorCode::Config, "empty key in override " + path);
    if (node->is_null()) *node = json::object();
    if (!node->is_object()) throw Error(ErrorCode::Config, "override path crosses a non-object: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  json doc;
  if (!path.empty()) {
    const std::string text = read_file(path);
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Config, path.string() + ": " + e.what());
    }
  } else {
    doc = json::object();
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ParseSummary parse_notes_file(const fs::path& in, const fs::path& out) {
  ParseSummary s;
  std::vector<json> rows;
  for (const auto& j : parse_jsonl(read_file(in))) {
    ++s.total;
    notes::RawNote raw;
    try {
      raw = j.get<notes::RawNote>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Format, std::string("raw note: ") + e.what());
    }
    try {
      auto parsed = notes::parse_note(raw);
      if (!parsed) {
        ++s.no_label;
        continue;
      }
      rows.push_back(*parsed);
      ++s.parsed;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MalformedNote) throw;
      ++s.malformed;
    }
  }
  write_file(out, dump_jsonl(rows));
  return s;
}

std::vector<notes::ParsedNote> load_notes(const RunConfig& c) {
  if (c.synthetic) return corpus::generate_synthetic_corpus(*c.synthetic, c.synthetic_seed);
  std::vector<notes::ParsedNote> out;
  for (const auto& j : parse_jsonl(read_file(c.input))) {
    try {
      if (c.input_format == "raw") {
        auto parsed = notes::parse_note(j.get<notes::RawNote>());
        if (parsed) out.push_back(std::move(*parsed));
      } else {
        out.push_back(j.get<notes::ParsedNote>());
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Format, c.input + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MalformedNote) throw;
    }
  }
  return out;
}

fs::path seed_dir(const RunConfig& c, std::uint64_t seed) {
  return fs::path(c.output_dir) / ("seed_" + std::to_string(seed));
}

corpus::Dataset build_seed(const RunConfig& c, std::uint64_t seed) {
  corpus::Dataset ds = corpus::build_dataset(load_notes(c), c.corpus, seed);
  corpus::save_dataset(ds, seed_dir(c, seed) / "data");
  return ds;
}

namespace {

std::string data_hash(const RunConfig& c) {
  if (c.synthetic) {
    return hex64(fnv1a(json(*c.synthetic).dump() + "#" + std::to_string(c.synthetic_seed)));
  }
  return hex64(fnv1a(read_file(c.input)));
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, p.string() + ": " + e.what());
  }
}

const std::vector<corpus::EncodedExample>& pick_split(const corpus::Dataset& ds, const std::string& split) {
  if (split == "train") return ds.split.train;
  if (split == "validation") return ds.split.validation;
  if (split == "test") return ds.split.test;
  throw Error(ErrorCode::Config, "unknown split '" + split + "' (train, validation, test)");
}

model::CnnModel load_cnn(const json& sidecar, const fs::path& dir) {
  model::CnnModel m(sidecar.at("config").get<model::CnnConfig>(), sidecar.at("vocab_size").get<std::size_t>(), 0);
  m.load_tensors(nd::read_checkpoint(dir / "model.ckpt"));
  return m;
}

void check_vocab(const json& sidecar, const corpus::Dataset& ds) {
  if (sidecar.at("vocab_hash").get<std::string>() != hex64(ds.vocab.hash())) {
    throw Error(ErrorCode::Format, "checkpoint was trained on a different vocabulary");
  }
}

}  // namespace

json train_seed(const RunConfig& c, std::uint64_t seed, double* seconds) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const corpus::Dataset ds = build_seed(c, seed);
  const fs::path dir = seed_dir(c, seed);

  json side;
  side["kind"] = std::string(model_kind_name(c.model));
  side["seed"] = seed;
  side["corpus"] = c.corpus;
  side["data_hash"] = data_hash(c);
  side["vocab_size"] = ds.vocab.size();
  side["vocab_hash"] = hex64(ds.vocab.hash());
  side["split_sizes"] = json{{"train", ds.split.train.size()},
                             {"validation", ds.split.validation.size()},
                             {"test", ds.split.test.size()}};

  switch (c.model) {
    case ModelKind::Cnn: {
      model::CnnModel m(c.cnn, ds.vocab.size(), seed);
      const auto r = m.train(ds.split, seed);
      nd::write_checkpoint(dir / "model.ckpt", m.to_tensors());
      side["config"] = c.cnn;
      side["best_epoch"] = r.loop.best_epoch;
      side["best_score"] = r.loop.best_score;
      side["val_metrics"] =
          r.loop.best_epoch > 0 ? json(r.loop.history[static_cast<std::size_t>(r.loop.best_epoch - 1)].val_metrics)
                                : json::object();
      side["history"] = r.loop.history;
      side["trained"] = r.loop.best_epoch > 0;
      break;
    }
    case ModelKind::Lr: {
      const auto p = baselines::train_lr(ds.split, ds.tfidf.dim(), c.lr, seed);
      nd::write_checkpoint(dir / "model.ckpt", baselines::to_tensors(p));
      side["config"] = c.lr;
      side["tfidf_dim"] = ds.tfidf.dim();
      side["history"] = p.history;
      side["val_metrics"] = json{{"loss", baselines::lr_loss(p, ds.split.validation)}};
      side["trained"] = c.lr.max_epochs > 0;
      break;
    }
    case ModelKind::Mlp: {
      const auto p = baselines::train_mlp(ds.split, c.mlp, seed);
      nd::write_checkpoint(dir / "model.ckpt", baselines::to_tensors(p));
      side["config"] = c.mlp;
      side["input_dim"] = p.input;
      side["best_epoch"] = p.history.best_epoch;
      side["history"] = p.history.history;
      side["val_metrics"] = json{{"loss", baselines::mlp_loss(p, ds.split.validation)}};
      side["trained"] = p.history.best_epoch > 0;
      break;
    }
  }
  write_file(dir / "model.json", dump_pretty(side));
  if (seconds) *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return side;
}

json eval_seed(const RunConfig& c, std::uint64_t seed, const std::string& split) {
  const fs::path dir = seed_dir(c, seed);
  const json side = read_json(dir / "model.json");
  const corpus::Dataset ds = corpus::load_dataset(dir / "data");
  check_vocab(side, ds);
  const auto& examples = pick_split(ds, split);
  const ModelKind kind = model_kind_from_name(side.at("kind").get<std::string>());
  const fs::path out = dir / ("eval_" + split);

  std::vector<std::vector<double>> probs;
  std::optional<model::CnnModel> cnn;
  switch (kind) {
    case ModelKind::Cnn: {
      cnn.emplace(load_cnn(side, dir));
      for (auto& t : cnn->infer_examples(examples)) probs.push_back(std::move(t.probs));
      break;
    }
    case ModelKind::Lr: {
      const auto p = baselines::lr_from_tensors(nd::read_checkpoint(dir / "model.ckpt"));
      for (const auto& e : examples) probs.push_back(baselines::lr_probs(p, e.tfidf));
      break;
    }
    case ModelKind::Mlp: {
      const auto p = baselines::mlp_from_tensors(nd::read_checkpoint(dir / "model.ckpt"));
      for (const auto& e : examples) probs.push_back(baselines::mlp_probs(p, e.admission));
      break;
    }
  }

  std::vector<notes::LabelVector> preds, labels;
  std::vector<json> rows;
  for (std::size_t r = 0; r < examples.size(); ++r) {
    preds.push_back(model::predict(probs[r]));
    labels.push_back(examples[r].labels);
    rows.push_back(prediction_json(examples[r].visit_id, probs[r]));
  }
  const auto rep = metrics::evaluate(preds, labels);
  json m = metrics::report_json(rep);
  m["model"] = std::string(model_kind_name(kind));
  m["split"] = split;
  m["seed"] = seed;
  write_file(out / "metrics.json", dump_pretty(m));
  write_file(out / "predictions.jsonl", dump_jsonl(rows));
  const std::vector<metrics::NamedReport> named = {{display_name(kind), rep}};
  write_file(out / "f1_table.txt", metrics::f1_table_text(named));
  write_file(out / "f1_table.csv", metrics::f1_table_csv(named));

  if (cnn) {
    const auto cov = cnn->medication_covariance(ds.split.train, c.identity_cov_x);
    std::vector<notes::LabelVector> train_labels;
    for (const auto& e : ds.split.train) train_labels.push_back(e.labels);
    const auto pm = metrics::pmi(train_labels, c.pmi_normalized);
    metrics::ScoreMatrix corr{};
    for (std::size_t i = 0; i < kNumMedications; ++i) {
      for (std::size_t j = 0; j < kNumMedications; ++j) corr[i][j] = cov.corr[i][j];
    }
    const auto rc = metrics::rank_comparison(corr, pm);
    write_file(out / "covariance.json", dump_pretty(model::covariance_json(cov)));
    write_file(out / "pmi.json", dump_pretty(metrics::pmi_json(pm)));
    write_file(out / "rank_comparison.json", dump_pretty(metrics::rank_json(rc)));
    write_file(out / "partner_table.txt", metrics::partner_table_text(rc));
    write_file(out / "partner_table.csv", metrics::partner_table_csv(rc));
  }
  return m;
}

void analyze_seed(const RunConfig& c, std::uint64_t seed) {
  const fs::path dir = seed_dir(c, seed);
  const json side = read_json(dir / "model.json");
  if (side.at("kind").get<std::string>() != "cnn") throw Error(ErrorCode::Config, "analysis needs a CNN checkpoint");
  if (!side.value("trained", false)) throw Error(ErrorCode::Config, "refusing to analyze an untrained checkpoint");
  const corpus::Dataset ds = corpus::load_dataset(dir / "data");
  check_vocab(side, ds);
  const model::CnnModel m = load_cnn(side, dir);
  const nd::Tensor& T = m.params()[m.params().index_of("T")].value;
  const fs::path out = dir / "analysis";

  std::vector<std::string> queries = c.analysis.neighbor_queries;
  if (queries.empty()) {
    for (std::size_t i = 2; i < ds.vocab.size() && queries.size() < c.analysis.neighbor_count; ++i) {
      queries.push_back(ds.vocab.word(i));
    }
  }
  std::vector<analysis::Neighbor> neighbors;
  for (const auto& q : queries) neighbors.push_back(analysis::nearest_neighbor(q, T, ds.vocab));
  write_file(out / "neighbors.csv", analysis::neighbors_csv(neighbors));

  const auto ngrams = analysis::all_filter_ngrams(m, ds.vocab, ds.split.train, c.analysis.top_n);
  write_file(out / "filter_ngrams.csv", analysis::filter_ngrams_csv(ngrams));

  json summary = json{{"neighbors", neighbors.size()}, {"filters", ngrams.size()}};
  if (c.analysis.tsne) {
    const auto& test = ds.split.test;
    const auto idx = analysis::sample_indices(test.size(), c.analysis.tsne_max_points, c.analysis.tsne_config.seed);
    std::vector<corpus::EncodedExample> sample;
    for (auto i : idx) sample.push_back(test[i]);
    std::vector<std::vector<double>> X;
    for (auto& t : m.infer_examples(sample)) X.push_back(std::move(t.x));
    analysis::TsneConfig tc = c.analysis.tsne_config;
    json ts = json{{"points", X.size()}, {"sample_seed", tc.seed}, {"config", tc}};
    if (X.size() >= 10 && tc.perplexity < static_cast<double>(X.size()) / 3.0) {
      const auto r = analysis::tsne(X, tc);
      std::vector<std::string> ids;
      std::vector<notes::LabelVector> labels;
      for (const auto& e : sample) ids.push_back(e.visit_id), labels.push_back(e.labels);
      write_file(out / "tsne.csv", analysis::tsne_csv(ids, r, labels));
      ts["kl_initial"] = r.kl_initial;
      ts["kl_post_exaggeration"] = r.kl_post_exaggeration;
      ts["kl_final"] = r.kl_final;
    } else {
      ts["skipped"] = "too few test notes for the configured perplexity";
    }
    summary["tsne"] = ts;
  }
  write_file(out / "summary.json", dump_pretty(summary));
}

namespace {

void flatten(const json& j, const std::string& prefix, std::map<std::string, double>& out) {
  if (j.is_number()) {
    out[prefix] = j.get<double>();
  } else if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      const auto& v = j[i];
      const std::string key = v.is_object() && v.contains("medication") ? v.at("medication").get<std::string>()
                                                                       : std::to_string(i);
      flatten(v, prefix.empty() ? key : prefix + "." + key, out);
    }
  }
}

metrics::MetricsReport report_from_flat(const json& flat) {
  metrics::MetricsReport r;
  auto get = [&](const std::string& k) { return flat.contains(k) && flat[k].is_number() ? flat[k].get<double>() : 0.0; };
  auto prf = [&](const std::string& p) {
    return metrics::Prf{get(p + ".precision"), get(p + ".recall"), get(p + ".f1")};
  };
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    const std::string p = "per_class." + std::string(kMedicationNames[i]);
    r.per_class[i] = prf(p);
    r.frequencies[i] = get(p + ".support");
  }
  r.micro = prf("micro");
  r.macro = prf("macro");
  r.pooled_micro = prf("pooled_micro");
  r.examples = static_cast<std::size_t>(get("examples"));
  return r;
}

}  // namespace

json aggregate_reports(const std::vector<json>& reports) {
  std::vector<std::map<std::string, double>> flat(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) flatten(reports[i], "", flat[i]);
  json mean = json::object(), sd = json::object();
  if (reports.empty()) return json{{"count", 0}, {"mean", mean}, {"std", sd}};
  for (const auto& [key, _] : flat.front()) {
    if (key == "seed") continue;
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& f : flat) {
      auto it = f.find(key);
      if (it == f.end()) continue;
      s += it->second;
      ++n;
    }
    const double m = s / static_cast<double>(n);
    mean[key] = m;
    if (n < 2) {
      sd[key] = nullptr;
      continue;
    }
    double ss = 0.0;
    for (const auto& f : flat) {
      auto it = f.find(key);
      if (it != f.end()) ss += (it->second - m) * (it->second - m);
    }
    sd[key] = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return json{{"count", reports.size()}, {"mean", mean}, {"std", sd}};
}

json report(const RunConfig& c, const std::string& split) {
  std::vector<json> reports;
  json per_seed = json::object();
  for (auto seed : c.seeds) {
    const json m = read_json(seed_dir(c, seed) / ("eval_" + split) / "metrics.json");
    per_seed[std::to_string(seed)] = m;
    reports.push_back(m);
  }
  const json agg = aggregate_reports(reports);
  const json cfg = to_json(c);
  json hashed = cfg;
  hashed.erase("output_dir");
  json manifest = json{{"config", cfg},
                       {"config_hash", hex64(fnv1a(hashed.dump()))},
                       {"data_hash", data_hash(c)},
                       {"model", std::string(model_kind_name(c.model))},
                       {"split", split},
                       {"seeds", c.seeds},
                       {"per_seed", per_seed},
                       {"aggregate", agg}};
  const fs::path out(c.output_dir);
  write_file(out / "manifest.json", dump_pretty(manifest));
  const std::string name = display_name(c.model);
  const std::vector<metrics::NamedReport> mean = {{name + " mean", report_from_flat(agg.at("mean"))}};
  write_file(out / "f1_table_mean.txt", metrics::f1_table_text(mean));
  write_file(out / "f1_table_mean.csv", metrics::f1_table_csv(mean));
  if (reports.size() >= 2) {
    const std::vector<metrics::NamedReport> sd = {{name + " std", report_from_flat(agg.at("std"))}};
    write_file(out / "f1_table_std.txt", metrics::f1_table_text(sd));
  }
  return manifest;
}

json run_all(const RunConfig& c) {
  c.validate();
  json timing = json::object();
  for (auto seed : c.seeds) {
    double secs = 0.0;
    train_seed(c, seed, &secs);
    eval_seed(c, seed, "test");
    if (c.model == ModelKind::Cnn) analyze_seed(c, seed);
    timing[std::to_string(seed)] = secs;
  }
  json manifest = report(c, "test");
  manifest["train_seconds"] = timing;
  write_file(fs::path(c.output_dir) / "manifest.json", dump_pretty(manifest));
  return manifest;
}

}  // namespace medpred::pipeline

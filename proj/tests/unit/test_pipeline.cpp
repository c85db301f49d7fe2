#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "medpred/error.hpp"
#include "medpred/pipeline.hpp"
#include "medpred/serialize.hpp"

using namespace medpred;
using namespace medpred::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("medpred_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  corpus::SyntheticSpec s;
  s.num_notes = 600;
  s.tokens_min = 20;
  s.tokens_max = 40;
  c.synthetic = s;
  c.synthetic_seed = 3;
  c.output_dir = out.string();
  c.seeds = {1, 2};
  c.corpus.max_length = 120;
  c.cnn.embed_dim = 16;
  c.cnn.filters_per_window = 8;
  c.cnn.dense_units = 16;
  c.cnn.keep_rate = 1.0;
  c.cnn.max_epochs = 10;
  c.cnn.patience = 10;
  c.analysis.neighbor_count = 4;
  c.analysis.tsne_max_points = 40;
  c.analysis.tsne_config.perplexity = 5;
  c.analysis.tsne_config.iterations = 300;
  return c;
}

}  // namespace

TEST_CASE("apply_override") {
  json doc = {{"cnn", {{"lr", 0.01}}}};
  apply_override(doc, "cnn.lr=0.5");
  apply_override(doc, "cnn.windows=[2,3]");
  apply_override(doc, "analysis.tsne_config.seed=9");
  apply_override(doc, "model=lr");
  CHECK(doc["cnn"]["lr"] == 0.5);
  CHECK(doc["cnn"]["windows"] == json::array({2, 3}));
  CHECK(doc["analysis"]["tsne_config"]["seed"] == 9);
  CHECK(doc["model"] == "lr");
  CHECK_THROWS_AS(apply_override(doc, "novalue"), Error);
  CHECK_THROWS_AS(apply_override(doc, "=3"), Error);
  CHECK_THROWS_AS(apply_override(doc, "model.x=1"), Error);

  const RunConfig c = config_from_json(doc);
  CHECK(c.cnn.lr == 0.5);
  CHECK(c.model == ModelKind::Lr);
  CHECK(c.analysis.tsne_config.seed == 9);
}

TEST_CASE("config round trip and validation") {
  RunConfig c = tiny(scratch("cfg"));
  c.cnn.activation = nd::Activation::Tanh;
  c.pmi_normalized = true;
  const json j = to_json(c);
  CHECK(to_json(config_from_json(j)) == j);

  CHECK_THROWS_AS(config_from_json(json{{"cnn", {{"lr", "fast"}}}}), Error);
  CHECK_THROWS_AS(config_from_json(json{{"model", "svm"}}), Error);
  CHECK_THROWS_AS(config_from_json(json{{"corpus", {{"max_len", 3}}}}), Error);

  RunConfig bad = c;
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.input = "/definitely/not/here.jsonl";
  CHECK_THROWS_AS(bad.validate(), Error);  // both input and synthetic
  bad.synthetic.reset();
  try {
    bad.validate();
    FAIL("missing input accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
  }
}

TEST_CASE("aggregate_reports matches a direct recomputation") {
  std::vector<json> reports;
  const double f1[] = {0.5, 0.75, 0.625};
  for (int s = 0; s < 3; ++s) {
    reports.push_back(json{{"seed", s}, {"macro", {{"f1", f1[s]}, {"precision", 0.1 * s}}}, {"examples", 10}});
  }
  const json agg = aggregate_reports(reports);
  const double mean = (0.5 + 0.75 + 0.625) / 3.0;
  const double var = ((0.5 - mean) * (0.5 - mean) + (0.75 - mean) * (0.75 - mean) +
                      (0.625 - mean) * (0.625 - mean)) / 2.0;
  CHECK(agg["count"] == 3);
  CHECK(agg["mean"]["macro.f1"].get<double>() == mean);
  CHECK(agg["std"]["macro.f1"].get<double>() == std::sqrt(var));
  CHECK(agg["std"]["examples"].get<double>() == 0.0);
  CHECK_FALSE(agg["mean"].contains("seed"));

  const json one = aggregate_reports({reports[0]});
  CHECK(one["mean"]["macro.f1"] == 0.5);
  CHECK(one["std"]["macro.f1"].is_null());
}

TEST_CASE("parse_notes_file counts") {
  const fs::path dir = scratch("parse");
  write_file(dir / "empty.jsonl", "");
  auto s = parse_notes_file(dir / "empty.jsonl", dir / "out.jsonl");
  CHECK(s.total == 0);
  CHECK(slurp(dir / "out.jsonl").empty());

  corpus::SyntheticSpec spec;
  spec.num_notes = 20;
  std::vector<json> rows;
  for (const auto& n : corpus::generate_synthetic_notes(spec, 5)) rows.push_back(n);
  // notes with no discharge medication section carry no label
  for (int i = 0; i < 3; ++i) {
    rows.push_back(json{{"visit_id", "nolabel" + std::to_string(i)},
                        {"text", "History of Present Illness:\nshort of breath\nDischarge Diagnosis:\nchf\n"}});
  }
  write_file(dir / "raw.jsonl", dump_jsonl(rows));
  s = parse_notes_file(dir / "raw.jsonl", dir / "parsed.jsonl");
  CHECK(s.total == 23);
  CHECK(s.parsed == 20);
  CHECK(s.no_label == 3);
  CHECK(parse_jsonl(slurp(dir / "parsed.jsonl")).size() == 20);
}

TEST_CASE("end-to-end run is reproducible and the manifest is consistent") {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const RunConfig ca = tiny(a);
  RunConfig cb = tiny(b);
  const json ma = run_all(ca);
  const json mb = run_all(cb);
  CHECK(ma["config_hash"] == mb["config_hash"]);
  CHECK(ma["aggregate"] == mb["aggregate"]);

  std::vector<json> per;
  for (auto seed : ca.seeds) {
    const fs::path sa = seed_dir(ca, seed), sb = seed_dir(cb, seed);
    for (const char* f : {"model.ckpt", "model.json", "eval_test/metrics.json", "eval_test/predictions.jsonl",
                          "eval_test/covariance.json", "eval_test/partner_table.txt", "analysis/filter_ngrams.csv",
                          "analysis/neighbors.csv", "analysis/tsne.csv"}) {
      CAPTURE(f);
      CHECK(slurp(sa / f) == slurp(sb / f));
    }
    per.push_back(json::parse(slurp(sa / "eval_test/metrics.json")));
  }
  CHECK(ma["aggregate"] == aggregate_reports(per));

  const auto m1 = per[0];
  CHECK(m1["macro"]["f1"].get<double>() > 0.8);

  // a planted trigger shows up among some filter's top n-grams
  const std::string ngrams = slurp(seed_dir(ca, 1) / "analysis/filter_ngrams.csv");
  bool trigger = false;
  for (const char* t : {"alphax", "betax", "gammax", "deltax", "epsilonx", "zetax", "etax", "thetax"}) {
    trigger = trigger || ngrams.find(t) != std::string::npos;
  }
  CHECK(trigger);

  // a different seed list only changes which seeds are run
  RunConfig one = ca;
  one.seeds = {2};
  const json m2 = report(one);
  CHECK(m2["aggregate"]["std"]["macro.f1"].is_null());
  CHECK(m2["aggregate"]["mean"]["macro.f1"] == per[1]["macro"]["f1"]);
}

TEST_CASE("untrained checkpoints and baselines") {
  const fs::path dir = scratch("untrained");
  RunConfig c = tiny(dir);
  c.seeds = {1};
  c.cnn.max_epochs = 0;
  const json side = train_seed(c, 1);
  CHECK(side["trained"] == false);
  try {
    analyze_seed(c, 1);
    FAIL("untrained checkpoint analyzed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
  }

  for (auto kind : {ModelKind::Lr, ModelKind::Mlp}) {
    RunConfig bc = tiny(scratch(std::string("base_") + std::string(model_kind_name(kind))));
    bc.seeds = {1};
    bc.model = kind;
    bc.lr.max_epochs = 5;
    bc.mlp.max_epochs = 5;
    train_seed(bc, 1);
    const json m = eval_seed(bc, 1);
    CHECK(m["model"] == std::string(model_kind_name(kind)));
    CHECK(m["macro"]["f1"].get<double>() >= 0.0);
    CHECK_FALSE(fs::exists(seed_dir(bc, 1) / "eval_test/covariance.json"));
    CHECK_THROWS_AS(analyze_seed(bc, 1), Error);
  }
}

// medpred: parse, synth, build, train, eval, analyze, report, run.
// Exit codes: 0 ok, 1 usage/config, 2 data, 3 numeric.
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "medpred/error.hpp"
#include "medpred/pipeline.hpp"

using namespace medpred;
namespace pl = medpred::pipeline;

namespace {

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::Config:
    case ErrorCode::InvalidSpec:
    case ErrorCode::BadPerplexity:
      return 1;
    case ErrorCode::NonFinite:
    case ErrorCode::DegenerateVariance:
      return 3;
    default:
      return 2;
  }
}

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::uint64_t> seeds;

  pl::RunConfig load() const {
    auto c = pl::load_config(config, overrides);
    if (!seeds.empty()) c.seeds = seeds;
    c.validate();
    return c;
  }
};

void add_common(CLI::App* sub, Common& o) {
  sub->add_option("-c,--config", o.config, "run config JSON")->check(CLI::ExistingFile);
  sub->add_option("-s,--set", o.overrides, "override a config key, e.g. cnn.lr=0.001")->take_all();
  sub->add_option("--seed", o.seeds, "run only these seeds (default: config seeds)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medication prediction from admission notes"};
  app.require_subcommand(1);

  std::string in_path, out_path, summary_path;
  auto* parse = app.add_subcommand("parse", "raw notes JSONL -> parsed notes JSONL");
  parse->add_option("input", in_path, "raw notes (visit_id, text)")->required();
  parse->add_option("output", out_path, "parsed notes")->required();
  parse->add_option("--summary", summary_path, "also write counts as JSON here");

  std::string spec_path;
  std::uint64_t synth_seed = 0;
  bool synth_raw = false;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("output", out_path, "notes JSONL")->required();
  synth->add_option("--spec", spec_path, "synthetic spec JSON (default spec when omitted)")->check(CLI::ExistingFile);
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_flag("--raw", synth_raw, "write raw note text instead of parsed notes");

  Common common;
  std::string split = "test";
  auto* build = app.add_subcommand("build", "build vocabulary, features and splits per seed");
  auto* train = app.add_subcommand("train", "train the configured model per seed");
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on a split");
  auto* analyze = app.add_subcommand("analyze", "embedding neighbors, filter n-grams, t-SNE (CNN)");
  auto* report = app.add_subcommand("report", "aggregate per-seed metrics into manifest.json");
  auto* run = app.add_subcommand("run", "train, eval, analyze and report in one go");
  for (auto* s : {build, train, eval, analyze, report, run}) add_common(s, common);
  for (auto* s : {eval, report}) s->add_option("--split", split, "train, validation or test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (parse->parsed()) {
      const auto s = pl::parse_notes_file(in_path, out_path);
      const json j = {{"total", s.total}, {"parsed", s.parsed}, {"no_label", s.no_label}, {"malformed", s.malformed}};
      if (!summary_path.empty()) write_file(summary_path, dump_pretty(j));
      std::cout << j.dump() << "\n";
    } else if (synth->parsed()) {
      corpus::SyntheticSpec spec;
      if (!spec_path.empty()) {
        try {
          spec = json::parse(read_file(spec_path)).get<corpus::SyntheticSpec>();
        } catch (const json::exception& e) {
          throw Error(ErrorCode::Config, spec_path + ": " + e.what());
        }
      }
      spec.validate();
      std::vector<json> rows;
      if (synth_raw) {
        for (const auto& n : corpus::generate_synthetic_notes(spec, synth_seed)) rows.push_back(n);
      } else {
        for (const auto& n : corpus::generate_synthetic_corpus(spec, synth_seed)) rows.push_back(n);
      }
      write_file(out_path, dump_jsonl(rows));
      std::cout << "wrote " << rows.size() << " notes to " << out_path << "\n";
    } else if (build->parsed()) {
      const auto c = common.load();
      for (auto seed : c.seeds) {
        const auto ds = pl::build_seed(c, seed);
        std::cout << "seed " << seed << ": vocab " << ds.vocab.size() << ", train " << ds.split.train.size()
                  << ", validation " << ds.split.validation.size() << ", test " << ds.split.test.size() << "\n";
      }
    } else if (train->parsed()) {
      const auto c = common.load();
      for (auto seed : c.seeds) {
        double secs = 0.0;
        const json side = pl::train_seed(c, seed, &secs);
        std::cout << "seed " << seed << ": best epoch " << side.value("best_epoch", 0) << " ("
                  << secs << " s) -> " << pl::seed_dir(c, seed).string() << "\n";
      }
    } else if (eval->parsed()) {
      const auto c = common.load();
      for (auto seed : c.seeds) {
        const json m = pl::eval_seed(c, seed, split);
        std::printf("seed %llu: micro F1 %.4f  macro F1 %.4f\n", static_cast<unsigned long long>(seed),
                    m["micro"]["f1"].get<double>(), m["macro"]["f1"].get<double>());
      }
    } else if (analyze->parsed()) {
      const auto c = common.load();
      for (auto seed : c.seeds) {
        pl::analyze_seed(c, seed);
        std::cout << "seed " << seed << ": " << (pl::seed_dir(c, seed) / "analysis").string() << "\n";
      }
    } else if (report->parsed()) {
      const auto c = common.load();
      const json m = pl::report(c, split);
      std::cout << m["aggregate"]["mean"].dump(2) << "\n";
    } else if (run->parsed()) {
      const auto c = common.load();
      const json m = pl::run_all(c);
      std::printf("micro F1 %.4f  macro F1 %.4f (mean over %zu seeds)\n",
                  m["aggregate"]["mean"]["micro.f1"].get<double>(), m["aggregate"]["mean"]["macro.f1"].get<double>(),
                  c.seeds.size());
    }
  } catch (const Error& e) {
    std::cerr << "medpred: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "medpred: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

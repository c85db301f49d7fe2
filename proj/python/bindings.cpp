// Thin bindings; structured values cross the boundary as JSON text and are
// decoded in medpred/__init__.py.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "medpred/analysis.hpp"
#include "medpred/error.hpp"
#include "medpred/metrics.hpp"
#include "medpred/model.hpp"
#include "medpred/note_parser.hpp"
#include "medpred/pipeline.hpp"
#include "medpred/serialize.hpp"

namespace py = pybind11;
using namespace medpred;

namespace {

std::vector<notes::LabelVector> label_vectors(const std::vector<std::vector<int>>& rows) {
  std::vector<notes::LabelVector> out;
  for (const auto& r : rows) {
    if (r.size() != kNumMedications) throw Error(ErrorCode::ShapeMismatch, "label rows need 8 entries");
    notes::LabelVector v{};
    for (std::size_t i = 0; i < kNumMedications; ++i) v[i] = r[i] != 0;
    out.push_back(v);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_medpred, m) {
  static py::exception<Error> error(m, "MedpredError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.attr("medications") = std::vector<std::string>(kMedicationNames.begin(), kMedicationNames.end());

  m.def("classify_heading", [](const std::string& h) -> std::optional<std::string> {
    auto t = notes::classify_heading(h);
    if (!t) return std::nullopt;
    return std::string(notes::section_type_name(*t));
  });
  m.def("normalize_tokens", [](const std::string& text) { return notes::normalize_tokens(text); });
  m.def("parse_note", [](const std::string& visit_id, const std::string& text) -> std::optional<std::string> {
    auto p = notes::parse_note({visit_id, text});
    if (!p) return std::nullopt;
    return json(*p).dump();
  });

  m.def("synthetic_notes", [](const std::string& spec_json, std::uint64_t seed, bool raw) {
    const auto spec = json::parse(spec_json).get<corpus::SyntheticSpec>();
    std::vector<json> rows;
    if (raw) {
      for (const auto& n : corpus::generate_synthetic_notes(spec, seed)) rows.push_back(n);
    } else {
      for (const auto& n : corpus::generate_synthetic_corpus(spec, seed)) rows.push_back(n);
    }
    return dump_jsonl(rows);
  });

  m.def("evaluate", [](const std::vector<std::vector<int>>& preds, const std::vector<std::vector<int>>& labels) {
    const auto p = label_vectors(preds), l = label_vectors(labels);
    return metrics::report_json(metrics::evaluate(p, l)).dump();
  });
  m.def("pmi", [](const std::vector<std::vector<int>>& labels, bool normalized) {
    const auto l = label_vectors(labels);
    return metrics::pmi_json(metrics::pmi(l, normalized)).dump();
  });

  m.def("tsne", [](const std::vector<std::vector<double>>& X, const std::string& config_json) {
    const auto cfg = json::parse(config_json).get<analysis::TsneConfig>();
    const auto r = analysis::tsne(X, cfg);
    json out = {{"Y", r.Y},
                {"kl_initial", r.kl_initial},
                {"kl_post_exaggeration", r.kl_post_exaggeration},
                {"kl_final", r.kl_final}};
    return out.dump();
  });

  m.def("zero_model_loss", [](const std::vector<std::vector<int>>& labels) {
    // Loss of a CNN whose weights, mu and Lambda are all zero.
    model::CnnConfig cfg;
    cfg.embed_dim = 4;
    cfg.windows = {2};
    cfg.filters_per_window = 2;
    cfg.dense_units = 3;
    model::CnnModel net(cfg, 10, 0);
    for (auto& p : net.params()) p.value.fill(0.0);
    const auto l = label_vectors(labels);
    std::vector<std::int32_t> tokens(3 * l.size(), 2);
    std::vector<std::span<const std::int32_t>> seqs;
    std::vector<std::size_t> lens(l.size(), 3);
    for (std::size_t i = 0; i < l.size(); ++i) seqs.emplace_back(tokens.data() + 3 * i, 3);
    const auto batch = model::make_sequence_batch(seqs, lens);
    nd::Tensor y({l.size(), kNumMedications});
    for (std::size_t i = 0; i < l.size(); ++i)
      for (std::size_t j = 0; j < kNumMedications; ++j) y[i * kNumMedications + j] = l[i][j];
    nd::Graph g;
    nd::Rng rng(0);
    return net.loss_batch(g, batch, y, nd::Mode::Infer, rng, true).value()[0];
  });

  namespace pl = pipeline;
  auto cfg = [](const std::string& j) { return pl::config_from_json(json::parse(j)); };
  m.def("load_config", [](const std::string& path, const std::vector<std::string>& overrides) {
    return pl::to_json(pl::load_config(path, overrides)).dump();
  });
  m.def("default_config", [] { return pl::to_json(pl::RunConfig{}).dump(); });
  m.def("train", [cfg](const std::string& c, std::uint64_t seed) { return pl::train_seed(cfg(c), seed).dump(); });
  m.def("evaluate_seed", [cfg](const std::string& c, std::uint64_t seed, const std::string& split) {
    return pl::eval_seed(cfg(c), seed, split).dump();
  });
  m.def("analyze", [cfg](const std::string& c, std::uint64_t seed) { pl::analyze_seed(cfg(c), seed); });
  m.def("report", [cfg](const std::string& c, const std::string& split) { return pl::report(cfg(c), split).dump(); });
  m.def("run", [cfg](const std::string& c) { return pl::run_all(cfg(c)).dump(); });
}

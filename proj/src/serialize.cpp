#include "medpred/serialize.hpp"

#include "medpred/error.hpp"

namespace medpred {

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw Error(ErrorCode::Config, std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw Error(ErrorCode::Config, "unknown key '" + key + "' in " + std::string(where));
  }
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json prf_json(const metrics::Prf& p) {
  return json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

// Wraps json type errors so bad config values surface as Config errors.
template <class F>
void config_guard(std::string_view where, F&& f) {
  try {
    f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string(where) + ": " + e.what());
  }
}

}  // namespace

namespace model {

void to_json(json& j, const CnnConfig& c) {
  j = json{{"embed_dim", c.embed_dim},
           {"dense_units", c.dense_units},
           {"windows", c.windows},
           {"filters_per_window", c.filters_per_window},
           {"num_labels", c.num_labels},
           {"activation", std::string(nd::activation_name(c.activation))},
           {"batch_norm", c.batch_norm},
           {"bn_recalibrate", c.bn_recalibrate},
           {"bn_calibration_examples", c.bn_calibration_examples},
           {"init_scale", c.init_scale},
           {"keep_rate", c.keep_rate},
           {"lr", c.lr},
           {"l2", c.l2},
           {"decay_embedding", c.decay_embedding},
           {"batch_size", c.batch_size},
           {"max_epochs", c.max_epochs},
           {"patience", c.patience},
           {"eval_batch", c.eval_batch}};
}

void from_json(const json& j, CnnConfig& c) {
  reject_unknown_keys(j,
                      {"embed_dim", "dense_units", "windows", "filters_per_window", "num_labels", "activation",
                       "batch_norm", "bn_recalibrate", "bn_calibration_examples", "init_scale", "keep_rate", "lr",
                       "l2", "decay_embedding", "batch_size", "max_epochs", "patience", "eval_batch"},
                      "cnn config");
  config_guard("cnn config", [&] {
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.dense_units = j.value("dense_units", c.dense_units);
    if (j.contains("windows")) j.at("windows").get_to(c.windows);
    c.filters_per_window = j.value("filters_per_window", c.filters_per_window);
    c.num_labels = j.value("num_labels", c.num_labels);
    if (j.contains("activation")) c.activation = nd::activation_from_name(j.at("activation").get<std::string>());
    c.batch_norm = j.value("batch_norm", c.batch_norm);
    c.bn_recalibrate = j.value("bn_recalibrate", c.bn_recalibrate);
    c.bn_calibration_examples = j.value("bn_calibration_examples", c.bn_calibration_examples);
    c.init_scale = j.value("init_scale", c.init_scale);
    c.keep_rate = j.value("keep_rate", c.keep_rate);
    c.lr = j.value("lr", c.lr);
    c.l2 = j.value("l2", c.l2);
    c.decay_embedding = j.value("decay_embedding", c.decay_embedding);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.eval_batch = j.value("eval_batch", c.eval_batch);
  });
}

json covariance_json(const CovarianceReport& r) {
  json corr = json::array();
  for (const auto& row : r.corr) {
    json out = json::array();
    for (const auto& v : row) out.push_back(optional_json(v));
    corr.push_back(out);
  }
  json degenerate = json::array();
  for (auto i : r.degenerate) degenerate.push_back(std::string(kMedicationNames[i]));
  return json{{"medications", kMedicationNames}, {"A", r.A}, {"corr", corr}, {"degenerate", degenerate}};
}

}  // namespace model

namespace baselines {

void to_json(json& j, const LrConfig& c) {
  j = json{{"l2", c.l2},
           {"lr", c.lr},
           {"batch_size", c.batch_size},
           {"max_epochs", c.max_epochs},
           {"patience", c.patience}};
}

void from_json(const json& j, LrConfig& c) {
  reject_unknown_keys(j, {"l2", "lr", "batch_size", "max_epochs", "patience"}, "lr config");
  config_guard("lr config", [&] {
    c.l2 = j.value("l2", c.l2);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
  });
}

void to_json(json& j, const MlpConfig& c) {
  j = json{{"hidden", c.hidden},
           {"l2", c.l2},
           {"lr", c.lr},
           {"init_scale", c.init_scale},
           {"identity_init", c.identity_init},
           {"batch_size", c.batch_size},
           {"max_epochs", c.max_epochs},
           {"patience", c.patience}};
}

void from_json(const json& j, MlpConfig& c) {
  reject_unknown_keys(
      j, {"hidden", "l2", "lr", "init_scale", "identity_init", "batch_size", "max_epochs", "patience"},
      "mlp config");
  config_guard("mlp config", [&] {
    c.hidden = j.value("hidden", c.hidden);
    c.l2 = j.value("l2", c.l2);
    c.lr = j.value("lr", c.lr);
    c.init_scale = j.value("init_scale", c.init_scale);
    c.identity_init = j.value("identity_init", c.identity_init);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
  });
}

}  // namespace baselines

namespace analysis {

void to_json(json& j, const TsneConfig& c) {
  j = json{{"perplexity", c.perplexity},
           {"iterations", c.iterations},
           {"learning_rate", c.learning_rate},
           {"exaggeration", c.exaggeration},
           {"exaggeration_iters", c.exaggeration_iters},
           {"momentum_start", c.momentum_start},
           {"momentum_final", c.momentum_final},
           {"momentum_switch", c.momentum_switch},
           {"seed", c.seed}};
}

void from_json(const json& j, TsneConfig& c) {
  reject_unknown_keys(j,
                      {"perplexity", "iterations", "learning_rate", "exaggeration", "exaggeration_iters",
                       "momentum_start", "momentum_final", "momentum_switch", "seed"},
                      "tsne config");
  config_guard("tsne config", [&] {
    c.perplexity = j.value("perplexity", c.perplexity);
    c.iterations = j.value("iterations", c.iterations);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.exaggeration = j.value("exaggeration", c.exaggeration);
    c.exaggeration_iters = j.value("exaggeration_iters", c.exaggeration_iters);
    c.momentum_start = j.value("momentum_start", c.momentum_start);
    c.momentum_final = j.value("momentum_final", c.momentum_final);
    c.momentum_switch = j.value("momentum_switch", c.momentum_switch);
    c.seed = j.value("seed", c.seed);
  });
}

}  // namespace analysis

namespace nd {

void to_json(json& j, const EpochRecord& r) {
  j = json{{"epoch", r.epoch},
           {"train_loss", r.train_loss},
           {"l2_penalty", r.l2_penalty},
           {"val_score", r.val_score},
           {"val_metrics", r.val_metrics}};
}

void to_json(json& j, const LoopResult& r) {
  j = json{{"best_epoch", r.best_epoch}, {"best_score", r.best_score}, {"history", r.history}};
}

}  // namespace nd

namespace metrics {

json report_json(const MetricsReport& r) {
  json per = json::array();
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    json row = prf_json(r.per_class[i]);
    row["medication"] = std::string(kMedicationNames[i]);
    row["support"] = r.frequencies[i];
    row["tp"] = r.counts[i].tp;
    row["fp"] = r.counts[i].fp;
    row["fn"] = r.counts[i].fn;
    row["tn"] = r.counts[i].tn;
    per.push_back(row);
  }
  return json{{"examples", r.examples},
              {"per_class", per},
              {"micro", prf_json(r.micro)},
              {"macro", prf_json(r.macro)},
              {"pooled_micro", prf_json(r.pooled_micro)}};
}

json pmi_json(const PmiMatrix& p) {
  json value = json::array();
  for (const auto& row : p.value) {
    json out = json::array();
    for (const auto& v : row) out.push_back(optional_json(v));
    value.push_back(out);
  }
  return json{{"medications", kMedicationNames}, {"examples", p.examples}, {"n", p.n},
              {"n_pair", p.n_pair},              {"value", value}};
}

json rank_json(const RankComparison& r) {
  json per = json::array();
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    const auto& m = r.per_medication[i];
    auto order = [](const auto& v) {
      json out = json::array();
      for (const auto& [j, s] : v) out.push_back(json{{"medication", kMedicationNames[j]}, {"score", optional_json(s)}});
      return out;
    };
    per.push_back(json{{"medication", kMedicationNames[i]},
                       {"corr_order", order(m.corr_order)},
                       {"pmi_order", order(m.pmi_order)},
                       {"top1_agree", m.top1_agree},
                       {"spearman", optional_json(m.spearman)}});
  }
  return json{{"top1_agreement", r.top1_agreement}, {"per_medication", per}};
}

}  // namespace metrics

json prediction_json(const std::string& visit_id, std::span<const double> probs) {
  json predicted = json::array();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.5) predicted.push_back(std::string(kMedicationNames[i]));
  }
  return json{{"visit_id", visit_id}, {"probs", std::vector<double>(probs.begin(), probs.end())},
              {"predicted", predicted}};
}

}  // namespace medpred

#include "medpred/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "medpred/error.hpp"
#include "medpred/metrics.hpp"

namespace medpred::model {

using nd::Graph;
using nd::Mode;
using nd::Tensor;
using nd::Var;

std::size_t CnnConfig::max_window() const {
  return windows.empty() ? 0 : *std::max_element(windows.begin(), windows.end());
}

void CnnConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
  if (embed_dim == 0 || dense_units == 0 || filters_per_window == 0 || num_labels == 0) {
    fail("model dimensions must be positive");
  }
  if (num_labels > kNumMedications) fail("num_labels cannot exceed 8");
  if (windows.empty()) fail("at least one window size is required");
  for (auto n : windows) {
    if (n == 0) fail("window sizes must be positive");
  }
  if (std::set<std::size_t>(windows.begin(), windows.end()).size() != windows.size()) {
    fail("window sizes must be distinct");
  }
  if (!(keep_rate > 0.0 && keep_rate <= 1.0)) fail("keep_rate must be in (0, 1]");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(l2 >= 0.0)) fail("l2 must be non-negative");
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (max_epochs < 0 || patience < 1) fail("max_epochs must be non-negative and patience positive");
  if (eval_batch == 0) fail("eval_batch must be positive");
}

SequenceBatch make_sequence_batch(std::span<const std::span<const std::int32_t>> seqs,
                                  std::span<const std::size_t> lengths) {
  if (seqs.size() != lengths.size()) throw Error(ErrorCode::ShapeMismatch, "sequence/length count");
  SequenceBatch b;
  b.lengths.assign(lengths.begin(), lengths.end());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (lengths[i] > seqs[i].size()) throw Error(ErrorCode::ShapeMismatch, "length exceeds sequence");
    b.length = std::max(b.length, lengths[i]);
  }
  b.indices.assign(seqs.size() * b.length, corpus::kPadIndex);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::copy_n(seqs[i].begin(), lengths[i], b.indices.begin() + static_cast<std::ptrdiff_t>(i * b.length));
  }
  return b;
}

SequenceBatch make_sequence_batch(std::span<const corpus::EncodedExample> examples,
                                  std::span<const std::size_t> rows) {
  std::vector<std::span<const std::int32_t>> seqs;
  std::vector<std::size_t> lengths;
  seqs.reserve(rows.size());
  lengths.reserve(rows.size());
  for (auto r : rows) {
    seqs.emplace_back(examples[r].token_indices);
    lengths.push_back(examples[r].length);
  }
  return make_sequence_batch(seqs, lengths);
}

Tensor label_tensor(std::span<const corpus::EncodedExample> examples, std::span<const std::size_t> rows) {
  Tensor t({rows.size(), kNumMedications});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < kNumMedications; ++j) t[i * kNumMedications + j] = examples[rows[i]].labels[j];
  }
  return t;
}

namespace {

std::string bank_name(std::size_t n) { return std::to_string(n); }

Tensor uniform(nd::Shape shape, double a, nd::Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

}  // namespace

CnnModel::CnnModel(const CnnConfig& config, std::size_t vocab_size, std::uint64_t seed)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  if (vocab_size < 2) throw Error(ErrorCode::Config, "vocabulary must contain pad and unk");
  nd::Rng rng(seed);
  const double a = config_.init_scale;
  const std::size_t h = config_.embed_dim, F = config_.filters_per_window;
  params_.add("T", uniform({vocab_size, h}, a, rng), config_.decay_embedding);
  for (auto n : config_.windows) {
    const auto tag = bank_name(n);
    params_.add("W" + tag, uniform({F, n, h}, a, rng), true);
    params_.add("b" + tag, Tensor({F}), false);
    if (config_.batch_norm) {
      params_.add("bn" + tag + ".gamma", Tensor({F}, 1.0), false);
      params_.add("bn" + tag + ".beta", Tensor({F}), false);
      bn_.push_back(nd::BatchNormState::for_features(F));
    }
  }
  const std::size_t s = config_.dense_units, k = config_.num_labels;
  params_.add("U", uniform({s, config_.total_filters()}, a, rng), true);
  params_.add("d", Tensor({s}), false);
  if (config_.batch_norm) {
    params_.add("bn_dense.gamma", Tensor({s}, 1.0), false);
    params_.add("bn_dense.beta", Tensor({s}), false);
    bn_.push_back(nd::BatchNormState::for_features(s));
  }
  params_.add("Lambda", uniform({k, s}, a, rng), true);
  params_.add("mu", Tensor({k}), false);
}

Var CnnModel::logits(Graph& g, const SequenceBatch& batch, Mode mode, nd::Rng& rng,
                     std::vector<ForwardTrace>* traces) {
  const std::size_t B = batch.size();
  if (B == 0) throw Error(ErrorCode::EmptyBatch, "empty batch");
  const std::size_t need = config_.max_window();
  for (std::size_t i = 0; i < B; ++i) {
    if (batch.lengths[i] < need) {
      throw Error(ErrorCode::SequenceTooShort, "note has " + std::to_string(batch.lengths[i]) +
                                                   " tokens, the widest window needs " + std::to_string(need));
    }
  }
  for (auto t : batch.indices) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size_) {
      throw Error(ErrorCode::ShapeMismatch, "token index outside the vocabulary");
    }
  }
  const bool train = mode == Mode::Train;
  // Inference binds copies, so nothing in the model is written.
  auto bind = [&](std::string_view name) {
    nd::Parameter& p = params_[params_.index_of(name)];
    return train ? g.param(p) : g.constant(p.value);
  };
  auto normalize = [&](Var v, const std::string& prefix, std::size_t state,
                       std::span<const std::uint8_t> mask) {
    if (!config_.batch_norm) return v;
    nd::BatchNormState local = bn_[state];
    nd::BatchNormState& st = train ? bn_[state] : local;
    return nd::batch_norm(v, bind(prefix + ".gamma"), bind(prefix + ".beta"), st, mode, mask);
  };

  Var D = nd::embedding(bind("T"), batch.indices, B, batch.length);
  std::vector<Var> pooled;
  std::vector<std::vector<std::size_t>> argmax(config_.windows.size());
  for (std::size_t bank = 0; bank < config_.windows.size(); ++bank) {
    const std::size_t n = config_.windows[bank];
    const auto tag = bank_name(n);
    Var C = nd::conv_bank(D, bind("W" + tag), bind("b" + tag), batch.lengths);
    const std::size_t P = batch.length - n + 1;
    const auto mask = nd::conv_valid_mask(batch.lengths, P, n);
    C = normalize(C, "bn" + tag, bank, mask);
    C = nd::activate(C, config_.activation);
    std::vector<std::size_t> valid(B);
    for (std::size_t i = 0; i < B; ++i) valid[i] = batch.lengths[i] - n + 1;
    pooled.push_back(nd::masked_max_pool(C, valid, traces ? &argmax[bank] : nullptr));
  }
  Var z = nd::concat_cols(pooled);
  Var zd = nd::dropout(z, config_.keep_rate, mode, rng);
  Var pre = nd::linear(zd, bind("U"), bind("d"));
  Var hidden = normalize(pre, "bn_dense", config_.windows.size(), {});
  Var x = nd::activate(hidden, config_.activation);
  Var y = nd::linear(x, bind("Lambda"), bind("mu"));

  if (traces) {
    const std::size_t F = config_.filters_per_window, Ft = config_.total_filters();
    const std::size_t s = config_.dense_units, k = config_.num_labels;
    traces->assign(B, {});
    for (std::size_t i = 0; i < B; ++i) {
      auto& t = (*traces)[i];
      t.logits.assign(y.value().storage().begin() + static_cast<std::ptrdiff_t>(i * k),
                      y.value().storage().begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
      for (double v : t.logits) t.probs.push_back(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
      t.x.assign(x.value().storage().begin() + static_cast<std::ptrdiff_t>(i * s),
                 x.value().storage().begin() + static_cast<std::ptrdiff_t>((i + 1) * s));
      t.z.assign(z.value().storage().begin() + static_cast<std::ptrdiff_t>(i * Ft),
                 z.value().storage().begin() + static_cast<std::ptrdiff_t>((i + 1) * Ft));
      t.dense_pre.assign(pre.value().storage().begin() + static_cast<std::ptrdiff_t>(i * s),
                         pre.value().storage().begin() + static_cast<std::ptrdiff_t>((i + 1) * s));
      for (std::size_t bank = 0; bank < config_.windows.size(); ++bank) {
        for (std::size_t f = 0; f < F; ++f) t.argmax.push_back(argmax[bank][i * F + f]);
      }
    }
  }
  return y;
}

std::vector<ForwardTrace> CnnModel::infer(const SequenceBatch& batch) const {
  std::vector<ForwardTrace> traces;
  Graph g;
  nd::Rng unused(0);
  // Infer mode neither binds parameters for gradients nor touches running stats.
  const_cast<CnnModel*>(this)->logits(g, batch, Mode::Infer, unused, &traces);
  return traces;
}

ForwardTrace CnnModel::forward(std::span<const std::int32_t> indices, Mode mode, nd::Rng& rng) {
  std::size_t len = 0;
  while (len < indices.size() && indices[len] != corpus::kPadIndex) ++len;
  const std::span<const std::int32_t> seqs[] = {indices};
  const std::size_t lens[] = {len};
  const SequenceBatch b = make_sequence_batch(seqs, lens);
  std::vector<ForwardTrace> traces;
  Graph g;
  logits(g, b, mode, rng, &traces);
  return traces.front();
}

Var CnnModel::loss_batch(Graph& g, const SequenceBatch& batch, const Tensor& labels, Mode mode, nd::Rng& rng,
                         bool with_penalty) {
  if (batch.size() == 0) throw Error(ErrorCode::EmptyBatch, "loss over an empty batch");
  Tensor lab = labels;
  const std::size_t k = config_.num_labels;
  if (labels.rank() == 2 && labels.dim(1) != k) {
    // Full 8-column label rows feeding a model with fewer outputs.
    lab = Tensor({labels.dim(0), k});
    for (std::size_t i = 0; i < labels.dim(0); ++i)
      for (std::size_t j = 0; j < k; ++j) lab[i * k + j] = labels.at(i, j);
  }
  Var loss = nd::bce_with_logits(logits(g, batch, mode, rng), lab);
  if (with_penalty && config_.l2 > 0.0) {
    for (auto& p : params_) {
      if (!p.decay) continue;
      Var w = mode == Mode::Train ? g.param(p) : g.constant(p.value);
      loss = nd::add(loss, nd::scale(nd::sum_squares(w), 0.5 * config_.l2));
    }
  }
  return loss;
}

std::vector<ForwardTrace> CnnModel::infer_examples(std::span<const corpus::EncodedExample> examples) const {
  std::vector<ForwardTrace> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += config_.eval_batch) {
    const std::size_t end = std::min(examples.size(), start + config_.eval_batch);
    std::vector<std::size_t> rows;
    for (std::size_t r = start; r < end; ++r) rows.push_back(r);
    for (auto& t : infer(make_sequence_batch(examples, rows))) out.push_back(std::move(t));
  }
  return out;
}

TrainResult CnnModel::train(const corpus::Split<corpus::EncodedExample>& split, std::uint64_t seed) {
  const auto& tr = split.train;
  if (tr.empty()) throw Error(ErrorCode::EmptyBatch, "no training examples");
  const auto t0 = std::chrono::steady_clock::now();

  nd::LoopConfig lc;
  lc.lr = config_.lr;
  lc.weight_decay = config_.l2;
  lc.batch_size = config_.batch_size;
  lc.max_epochs = config_.max_epochs;
  lc.patience = config_.patience;
  lc.seed = seed;

  nd::ParameterSet best = params_;
  std::vector<nd::BatchNormState> best_bn = bn_;

  nd::TrainingHooks hooks;
  hooks.batch_loss = [&](Graph& g, std::span<const std::size_t> rows, nd::Rng& rng) {
    return loss_batch(g, make_sequence_batch(tr, rows), label_tensor(tr, rows), Mode::Train, rng, false);
  };
  const std::size_t calib = std::min(tr.size(), config_.bn_calibration_examples);
  hooks.validate = [&]() {
    if (config_.batch_norm && config_.bn_recalibrate) recalibrate_batch_norm(std::span(tr).first(calib));
    const auto traces = infer_examples(split.validation);
    std::vector<notes::LabelVector> preds, labels;
    double loss = 0.0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      preds.push_back(predict(traces[i].probs));
      labels.push_back(split.validation[i].labels);
      for (std::size_t j = 0; j < config_.num_labels; ++j) {
        const double y = traces[i].logits[j], l = split.validation[i].labels[j];
        loss += std::max(y, 0.0) - y * l + std::log1p(std::exp(-std::abs(y)));
      }
    }
    const auto rep = metrics::evaluate(preds, labels);
    nd::Validation v;
    v.score = rep.macro.f1;
    v.metrics["macro_f1"] = rep.macro.f1;
    v.metrics["micro_f1"] = rep.micro.f1;
    v.metrics["pooled_micro_f1"] = rep.pooled_micro.f1;
    v.metrics["loss"] = traces.empty() ? 0.0 : loss / static_cast<double>(traces.size());
    return v;
  };
  hooks.on_improved = [&](int) {
    best.assign_values(params_);
    best_bn = bn_;
  };

  TrainResult result;
  result.loop = nd::run_training(params_, tr.size(), lc, hooks);
  params_.assign_values(best);
  bn_ = best_bn;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

FilterView CnnModel::filter(std::size_t bank, std::size_t f) const {
  if (bank >= config_.windows.size() || f >= config_.filters_per_window) {
    throw Error(ErrorCode::ShapeMismatch, "filter index out of range");
  }
  const std::size_t n = config_.windows[bank], h = config_.embed_dim;
  const auto tag = bank_name(n);
  FilterView v;
  v.window = n;
  v.activation = config_.activation;
  v.W = Tensor({n, h});
  const Tensor& W = param("W" + tag).value;
  std::copy_n(W.storage().begin() + static_cast<std::ptrdiff_t>(f * n * h), n * h, v.W.storage().begin());
  v.bias = param("b" + tag).value[f];
  if (config_.batch_norm) {
    const auto& st = bn_[bank];
    v.scale = param("bn" + tag + ".gamma").value[f] / std::sqrt(std::max(st.running_var[f], 0.0) + st.eps);
    v.shift = param("bn" + tag + ".beta").value[f] - v.scale * st.running_mean[f];
  }
  return v;
}

void CnnModel::recalibrate_batch_norm(std::span<const corpus::EncodedExample> examples) {
  if (!config_.batch_norm || examples.empty()) return;
  const std::size_t banks = config_.windows.size(), F = config_.filters_per_window;
  const std::size_t s = config_.dense_units;

  // Convolution outputs do not depend on any batch norm.
  std::vector<std::vector<double>> sum(banks, std::vector<double>(F, 0.0)), sq = sum;
  std::vector<double> count(banks, 0.0);
  for (std::size_t start = 0; start < examples.size(); start += config_.eval_batch) {
    const std::size_t end = std::min(examples.size(), start + config_.eval_batch);
    std::vector<std::size_t> rows;
    for (std::size_t r = start; r < end; ++r) rows.push_back(r);
    const SequenceBatch b = make_sequence_batch(examples, rows);
    for (auto len : b.lengths) {
      if (len < config_.max_window()) throw Error(ErrorCode::SequenceTooShort, "note shorter than widest window");
    }
    Graph g;
    Var D = nd::embedding(g.constant(param("T").value), b.indices, b.size(), b.length);
    for (std::size_t bank = 0; bank < banks; ++bank) {
      const std::size_t n = config_.windows[bank];
      const auto tag = bank_name(n);
      Var C = nd::conv_bank(D, g.constant(param("W" + tag).value), g.constant(param("b" + tag).value),
                            b.lengths);
      const std::size_t P = b.length - n + 1;
      const auto mask = nd::conv_valid_mask(b.lengths, P, n);
      const Tensor& cv = C.value();
      for (std::size_t r = 0; r < mask.size(); ++r) {
        if (!mask[r]) continue;
        count[bank] += 1.0;
        for (std::size_t f = 0; f < F; ++f) {
          const double v = cv[r * F + f];
          sum[bank][f] += v;
          sq[bank][f] += v * v;
        }
      }
    }
  }
  for (std::size_t bank = 0; bank < banks; ++bank) {
    for (std::size_t f = 0; f < F; ++f) {
      const double m = sum[bank][f] / count[bank];
      bn_[bank].running_mean[f] = m;
      bn_[bank].running_var[f] = std::max(0.0, sq[bank][f] / count[bank] - m * m);
    }
  }

  // The dense layer sees conv features normalized with the statistics above.
  std::vector<double> dsum(s, 0.0), dsq(s, 0.0);
  for (const auto& t : infer_examples(examples)) {
    for (std::size_t j = 0; j < s; ++j) {
      dsum[j] += t.dense_pre[j];
      dsq[j] += t.dense_pre[j] * t.dense_pre[j];
    }
  }
  const double N = static_cast<double>(examples.size());
  for (std::size_t j = 0; j < s; ++j) {
    const double m = dsum[j] / N;
    bn_[banks].running_mean[j] = m;
    bn_[banks].running_var[j] = std::max(0.0, dsq[j] / N - m * m);
  }
}

std::vector<std::vector<double>> sample_covariance(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2) throw Error(ErrorCode::TooFewExamples, "covariance needs at least 2 examples");
  const std::size_t s = rows.front().size();
  std::vector<double> mean(s, 0.0);
  for (const auto& r : rows) {
    if (r.size() != s) throw Error(ErrorCode::ShapeMismatch, "ragged rows");
    for (std::size_t j = 0; j < s; ++j) mean[j] += r[j];
  }
  for (double& m : mean) m /= static_cast<double>(rows.size());
  std::vector<std::vector<double>> c(s, std::vector<double>(s, 0.0));
  for (const auto& r : rows) {
    for (std::size_t a = 0; a < s; ++a) {
      const double da = r[a] - mean[a];
      for (std::size_t b = a; b < s; ++b) c[a][b] += da * (r[b] - mean[b]);
    }
  }
  const double denom = static_cast<double>(rows.size() - 1);
  for (std::size_t a = 0; a < s; ++a) {
    for (std::size_t b = a; b < s; ++b) {
      c[a][b] /= denom;
      c[b][a] = c[a][b];
    }
  }
  return c;
}

CovarianceReport covariance_from(const Tensor& lambda, const std::vector<std::vector<double>>& cov_x) {
  if (lambda.rank() != 2 || lambda.dim(1) != cov_x.size()) {
    throw Error(ErrorCode::ShapeMismatch, "Lambda columns must match cov[x]");
  }
  const std::size_t k = lambda.dim(0), s = lambda.dim(1);
  // L C, then (L C) L^T
  std::vector<std::vector<double>> lc(k, std::vector<double>(s, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t a = 0; a < s; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < s; ++b) acc += lambda.at(i, b) * cov_x[b][a];
      lc[i][a] = acc;
    }
  CovarianceReport r;
  r.A.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < s; ++a) acc += lc[i][a] * lambda.at(j, a);
      r.A[i][j] = acc;
    }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) r.A[i][j] = r.A[j][i] = 0.5 * (r.A[i][j] + r.A[j][i]);

  r.corr.assign(k, std::vector<std::optional<double>>(k));
  for (std::size_t i = 0; i < k; ++i) {
    if (r.A[i][i] < 1e-12) r.degenerate.push_back(i);
  }
  auto ok = [&](std::size_t i) { return r.A[i][i] >= 1e-12; };
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (!ok(i) || !ok(j)) continue;
      r.corr[i][j] = i == j ? 1.0 : r.A[i][j] / (std::sqrt(r.A[i][i]) * std::sqrt(r.A[j][j]));
    }
  }
  return r;
}

CovarianceReport CnnModel::medication_covariance(std::span<const corpus::EncodedExample> examples,
                                                 bool identity_cov_x) const {
  const std::size_t s = config_.dense_units;
  std::vector<std::vector<double>> cov;
  if (identity_cov_x) {
    cov.assign(s, std::vector<double>(s, 0.0));
    for (std::size_t a = 0; a < s; ++a) cov[a][a] = 1.0;
  } else {
    if (examples.size() < 2) throw Error(ErrorCode::TooFewExamples, "covariance needs at least 2 examples");
    std::vector<std::vector<double>> xs;
    xs.reserve(examples.size());
    for (auto& t : infer_examples(examples)) xs.push_back(std::move(t.x));
    cov = sample_covariance(xs);
  }
  return covariance_from(param("Lambda").value, cov);
}

std::vector<nd::NamedTensor> CnnModel::to_tensors() const {
  std::vector<nd::NamedTensor> out;
  for (const auto& p : params_) {
    out.push_back({p.name, p.value, static_cast<std::uint8_t>(1u | (p.decay ? 2u : 0u))});
  }
  if (config_.batch_norm) {
    for (std::size_t b = 0; b < bn_.size(); ++b) {
      const std::string prefix = b < config_.windows.size() ? "bn" + bank_name(config_.windows[b]) : "bn_dense";
      out.push_back({prefix + ".running_mean", bn_[b].running_mean, 0});
      out.push_back({prefix + ".running_var", bn_[b].running_var, 0});
    }
  }
  return out;
}

void CnnModel::load_tensors(const std::vector<nd::NamedTensor>& tensors) {
  std::map<std::string, const nd::NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::Format, "checkpoint lacks tensor '" + name + "'");
    if (it->second->tensor.shape() != dst.shape()) {
      throw Error(ErrorCode::Format, "tensor '" + name + "' has shape " +
                                         nd::shape_string(it->second->tensor.shape()) + ", expected " +
                                         nd::shape_string(dst.shape()));
    }
    dst = it->second->tensor;
  };
  for (auto& p : params_) take(p.name, p.value);
  if (config_.batch_norm) {
    for (std::size_t b = 0; b < bn_.size(); ++b) {
      const std::string prefix = b < config_.windows.size() ? "bn" + bank_name(config_.windows[b]) : "bn_dense";
      take(prefix + ".running_mean", bn_[b].running_mean);
      take(prefix + ".running_var", bn_[b].running_var);
    }
  }
}

notes::LabelVector predict(std::span<const double> probs) {
  notes::LabelVector out{};
  for (std::size_t i = 0; i < std::min(probs.size(), kNumMedications); ++i) out[i] = probs[i] > 0.5;
  return out;
}

std::vector<Medication> predicted_medications(std::span<const double> probs) {
  std::vector<Medication> out;
  for (std::size_t i = 0; i < std::min(probs.size(), kNumMedications); ++i) {
    if (probs[i] > 0.5) out.push_back(static_cast<Medication>(i));
  }
  return out;
}

}  // namespace medpred::model

#include "medpred/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "medpred/error.hpp"
#include "medpred/nd/ops.hpp"

namespace medpred::baselines {

using corpus::EncodedExample;
using nd::Graph;
using nd::Tensor;
using nd::Var;

namespace {

double sigmoid(double y) { return y >= 0 ? 1.0 / (1.0 + std::exp(-y)) : std::exp(y) / (1.0 + std::exp(y)); }

double bce(double y, double l) { return std::max(y, 0.0) - y * l + std::log1p(std::exp(-std::abs(y))); }

std::vector<Medication> threshold(const std::vector<double>& probs) {
  std::vector<Medication> out;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.5) out.push_back(static_cast<Medication>(i));
  }
  return out;
}

double lr_logit(const LrParams& p, std::size_t i, const corpus::SparseVector& x) {
  double y = p.b[i];
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    const auto c = static_cast<std::size_t>(x.index[k]);
    if (c < p.dim) y += p.W[i * p.dim + c] * x.value[k];
  }
  return y;
}

Tensor dense_tfidf(std::span<const EncodedExample> ex, std::span<const std::size_t> rows, std::size_t dim) {
  Tensor X({rows.size(), dim});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& v = ex[rows[r]].tfidf;
    for (std::size_t k = 0; k < v.nnz(); ++k) {
      const auto c = static_cast<std::size_t>(v.index[k]);
      if (c < dim) X[r * dim + c] = v.value[k];
    }
  }
  return X;
}

Tensor dense_admission(std::span<const EncodedExample> ex, std::span<const std::size_t> rows, std::size_t dim) {
  Tensor X({rows.size(), dim});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& a = ex[rows[r]].admission;
    if (a.size() != dim) throw Error(ErrorCode::ShapeMismatch, "admission vector width differs from model input");
    for (std::size_t c = 0; c < dim; ++c) X[r * dim + c] = a[c];
  }
  return X;
}

Var mlp_logits(Var X, Var W1, Var b1, Var W2, Var b2) {
  Var h = nd::activate(nd::linear(X, W1, b1), nd::Activation::Relu);
  return nd::linear(h, W2, b2);
}

}  // namespace

LrParams train_lr(const corpus::Split<EncodedExample>& split, std::size_t dim, const LrConfig& config,
                  std::uint64_t seed) {
  const auto& tr = split.train;
  if (tr.empty()) throw Error(ErrorCode::EmptyBatch, "no training examples");
  if (dim == 0) throw Error(ErrorCode::Config, "tf-idf dimension must be positive");
  if (config.l2 < 0) throw Error(ErrorCode::Config, "l2 must be non-negative");

  LrParams out;
  out.dim = dim;
  out.W = Tensor({kNumMedications, dim});
  out.b = Tensor({kNumMedications});

  nd::LoopConfig lc;
  lc.lr = config.lr;
  lc.weight_decay = config.l2 / static_cast<double>(tr.size());
  lc.batch_size = config.batch_size;
  lc.max_epochs = config.max_epochs;
  lc.patience = config.patience;
  lc.seed = seed;  // same shuffle for every medication

  for (std::size_t i = 0; i < kNumMedications; ++i) {
    nd::ParameterSet ps;
    ps.add("w", Tensor({1, dim}), true);
    ps.add("b", Tensor({1}), false);
    nd::ParameterSet best = ps;

    auto single = [&](const nd::ParameterSet& s) {
      LrParams one;
      one.dim = dim;
      one.W = Tensor({kNumMedications, dim});
      one.b = Tensor({kNumMedications});
      std::copy(s[0].value.storage().begin(), s[0].value.storage().end(),
                one.W.storage().begin() + static_cast<std::ptrdiff_t>(i * dim));
      one.b[i] = s[1].value[0];
      return one;
    };

    nd::TrainingHooks hooks;
    hooks.batch_loss = [&](Graph& g, std::span<const std::size_t> rows, nd::Rng&) {
      Tensor labels({rows.size(), 1});
      for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = tr[rows[r]].labels[i];
      Var X = g.constant(dense_tfidf(tr, rows, dim));
      return nd::bce_with_logits(nd::linear(X, g.param(ps[0]), g.param(ps[1])), labels);
    };
    hooks.validate = [&]() {
      const LrParams one = single(ps);
      double loss = 0.0;
      for (const auto& e : split.validation) loss += bce(lr_logit(one, i, e.tfidf), e.labels[i]);
      if (!split.validation.empty()) loss /= static_cast<double>(split.validation.size());
      // stop on the objective being minimized, penalty included
      const double objective = loss + 0.5 * lc.weight_decay * std::inner_product(ps[0].value.storage().begin(), ps[0].value.storage().end(), ps[0].value.storage().begin(), 0.0);
      nd::Validation v;
      v.score = -objective;
      v.metrics["loss"] = loss;
      v.metrics["objective"] = objective;
      return v;
    };
    hooks.on_improved = [&](int) { best.assign_values(ps); };

    out.history.push_back(nd::run_training(ps, tr.size(), lc, hooks));
    const LrParams one = single(best);
    std::copy_n(one.W.storage().begin() + static_cast<std::ptrdiff_t>(i * dim), dim,
                out.W.storage().begin() + static_cast<std::ptrdiff_t>(i * dim));
    out.b[i] = one.b[i];
  }
  return out;
}

MlpParams train_mlp(const corpus::Split<EncodedExample>& split, const MlpConfig& config, std::uint64_t seed) {
  const auto& tr = split.train;
  if (tr.empty()) throw Error(ErrorCode::EmptyBatch, "no training examples");
  const std::size_t in = tr.front().admission.size(), hid = config.hidden;
  if (in == 0) throw Error(ErrorCode::Config, "empty admission-medication vocabulary");
  if (hid == 0) throw Error(ErrorCode::Config, "hidden size must be positive");
  if (config.identity_init && hid != in) throw Error(ErrorCode::Config, "identity init needs hidden == input");

  nd::Rng rng(seed);
  nd::ParameterSet ps;
  Tensor W1({hid, in}), W2({kNumMedications, hid});
  if (config.identity_init) {
    for (std::size_t j = 0; j < hid; ++j) W1[j * in + j] = 1.0;
  } else {
    for (auto& w : W1.storage()) w = rng.uniform(-config.init_scale, config.init_scale);
  }
  for (auto& w : W2.storage()) w = rng.uniform(-config.init_scale, config.init_scale);
  ps.add("W1", W1, true);
  ps.add("b1", Tensor({hid}), false);
  ps.add("W2", W2, true);
  ps.add("b2", Tensor({kNumMedications}), false);

  auto snapshot = [&](const nd::ParameterSet& s) {
    MlpParams p;
    p.input = in;
    p.hidden = hid;
    p.W1 = s[0].value;
    p.b1 = s[1].value;
    p.W2 = s[2].value;
    p.b2 = s[3].value;
    return p;
  };

  nd::LoopConfig lc;
  lc.lr = config.lr;
  lc.weight_decay = config.l2;
  lc.batch_size = config.batch_size;
  lc.max_epochs = config.max_epochs;
  lc.patience = config.patience;
  lc.seed = seed;

  nd::ParameterSet best = ps;
  nd::TrainingHooks hooks;
  hooks.batch_loss = [&](Graph& g, std::span<const std::size_t> rows, nd::Rng&) {
    Tensor labels({rows.size(), kNumMedications});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < kNumMedications; ++j) labels[r * kNumMedications + j] = tr[rows[r]].labels[j];
    }
    Var X = g.constant(dense_admission(tr, rows, in));
    return nd::bce_with_logits(mlp_logits(X, g.param(ps[0]), g.param(ps[1]), g.param(ps[2]), g.param(ps[3])),
                               labels);
  };
  hooks.validate = [&]() {
    const double loss = mlp_loss(snapshot(ps), split.validation);
    nd::Validation v;
    v.score = -loss;
    v.metrics["loss"] = loss;
    return v;
  };
  hooks.on_improved = [&](int) { best.assign_values(ps); };

  const nd::LoopResult hist = nd::run_training(ps, tr.size(), lc, hooks);
  MlpParams out = snapshot(best);
  out.history = hist;
  return out;
}

std::vector<double> lr_probs(const LrParams& p, const corpus::SparseVector& x) {
  std::vector<double> probs(kNumMedications);
  for (std::size_t i = 0; i < kNumMedications; ++i) probs[i] = sigmoid(lr_logit(p, i, x));
  return probs;
}

namespace {

std::vector<double> mlp_logit_vector(const MlpParams& p, std::span<const std::uint8_t> x) {
  if (x.size() != p.input) throw Error(ErrorCode::ShapeMismatch, "admission vector width differs from model input");
  std::vector<double> h(p.hidden);
  for (std::size_t j = 0; j < p.hidden; ++j) {
    double a = p.b1[j];
    for (std::size_t c = 0; c < p.input; ++c) a += p.W1[j * p.input + c] * x[c];
    h[j] = std::max(a, 0.0);
  }
  std::vector<double> y(kNumMedications);
  for (std::size_t i = 0; i < kNumMedications; ++i) {
    double a = p.b2[i];
    for (std::size_t j = 0; j < p.hidden; ++j) a += p.W2[i * p.hidden + j] * h[j];
    y[i] = a;
  }
  return y;
}

}  // namespace

std::vector<double> mlp_probs(const MlpParams& p, std::span<const std::uint8_t> x) {
  auto y = mlp_logit_vector(p, x);
  for (auto& v : y) v = sigmoid(v);
  return y;
}

std::vector<Medication> predict_baseline(const LrParams& p, const corpus::SparseVector& x) {
  return threshold(lr_probs(p, x));
}

std::vector<Medication> predict_baseline(const MlpParams& p, std::span<const std::uint8_t> x) {
  return threshold(mlp_probs(p, x));
}

double lr_loss(const LrParams& p, std::span<const EncodedExample> examples) {
  if (examples.empty()) return 0.0;
  double loss = 0.0;
  for (const auto& e : examples) {
    for (std::size_t i = 0; i < kNumMedications; ++i) loss += bce(lr_logit(p, i, e.tfidf), e.labels[i]);
  }
  return loss / static_cast<double>(examples.size());
}

double mlp_loss(const MlpParams& p, std::span<const EncodedExample> examples) {
  if (examples.empty()) return 0.0;
  double loss = 0.0;
  for (const auto& e : examples) {
    const auto y = mlp_logit_vector(p, e.admission);
    for (std::size_t i = 0; i < kNumMedications; ++i) loss += bce(y[i], e.labels[i]);
  }
  return loss / static_cast<double>(examples.size());
}

std::vector<nd::NamedTensor> to_tensors(const LrParams& p) {
  return {{"W", p.W, 3}, {"b", p.b, 1}};
}

std::vector<nd::NamedTensor> to_tensors(const MlpParams& p) {
  return {{"W1", p.W1, 3}, {"b1", p.b1, 1}, {"W2", p.W2, 3}, {"b2", p.b2, 1}};
}

namespace {

const Tensor& find(const std::vector<nd::NamedTensor>& t, std::string_view name) {
  for (const auto& n : t) {
    if (n.name == name) return n.tensor;
  }
  throw Error(ErrorCode::Format, "checkpoint lacks tensor " + std::string(name));
}

}  // namespace

LrParams lr_from_tensors(const std::vector<nd::NamedTensor>& t) {
  LrParams p;
  p.W = find(t, "W");
  p.b = find(t, "b");
  if (p.W.shape().size() != 2 || p.W.shape()[0] != kNumMedications || p.b.size() != kNumMedications) {
    throw Error(ErrorCode::Format, "LR tensors have the wrong shape");
  }
  p.dim = p.W.shape()[1];
  return p;
}

MlpParams mlp_from_tensors(const std::vector<nd::NamedTensor>& t) {
  MlpParams p;
  p.W1 = find(t, "W1");
  p.b1 = find(t, "b1");
  p.W2 = find(t, "W2");
  p.b2 = find(t, "b2");
  if (p.W1.shape().size() != 2 || p.W2.shape().size() != 2) throw Error(ErrorCode::Format, "MLP weights must be matrices");
  p.hidden = p.W1.shape()[0];
  p.input = p.W1.shape()[1];
  if (p.b1.size() != p.hidden || p.W2.shape()[0] != kNumMedications || p.W2.shape()[1] != p.hidden ||
      p.b2.size() != kNumMedications) {
    throw Error(ErrorCode::Format, "MLP tensors have inconsistent shapes");
  }
  return p;
}

}  // namespace medpred::baselines

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medpred/corpus.hpp"
#include "medpred/nd/checkpoint.hpp"
#include "medpred/nd/ops.hpp"
#include "medpred/nd/train_loop.hpp"

namespace medpred::model {

struct CnnConfig {
  std::size_t embed_dim = 100;  // h
  std::size_t dense_units = 64; // s
  std::vector<std::size_t> windows = {3, 4, 5};
  std::size_t filters_per_window = 64;
  std::size_t num_labels = kNumMedications;  // k
  nd::Activation activation = nd::Activation::Relu;
  bool batch_norm = true;
  double init_scale = 0.05;
  double keep_rate = 0.3;
  double lr = 0.01;
  double l2 = 0.1;
  bool decay_embedding = true;  // whether T is part of the L2 penalty
  std::size_t batch_size = 64;
  int max_epochs = 50;  // 0 leaves the initial weights (checkpoint marked untrained)
  int patience = 5;
  std::size_t eval_batch = 256;
  // Before each validation pass, replace batch-norm running statistics with
  // population statistics over (up to bn_calibration_examples) training notes.
  bool bn_recalibrate = true;
  std::size_t bn_calibration_examples = 2048;

  std::size_t total_filters() const { return windows.size() * filters_per_window; }
  std::size_t max_window() const;
  void validate() const;  // throws Config
};

// Token indices for a batch of notes, padded to the longest note in the batch.
struct SequenceBatch {
  std::vector<std::int32_t> indices;  // batch x length, row-major
  std::vector<std::size_t> lengths;
  std::size_t length = 0;

  std::size_t size() const { return lengths.size(); }
};

// Non-pad prefix lengths are taken as given; indices past them are ignored.
SequenceBatch make_sequence_batch(std::span<const std::span<const std::int32_t>> seqs,
                                  std::span<const std::size_t> lengths);
SequenceBatch make_sequence_batch(std::span<const corpus::EncodedExample> examples,
                                  std::span<const std::size_t> rows);

struct ForwardTrace {
  std::vector<double> probs;   // k
  std::vector<double> logits;  // y, k
  std::vector<double> x;       // dense activations, s
  std::vector<double> z;       // pooled features, F
  std::vector<double> dense_pre;  // U z + d before normalization, s
  std::vector<std::size_t> argmax;  // per filter, window start position
};

// One filter as analysis sees it: value(window) = act(scale * (<W, D> + b) + shift).
struct FilterView {
  std::size_t window = 0;
  nd::Tensor W;  // [n x h]
  double bias = 0.0;
  double scale = 1.0;
  double shift = 0.0;
  nd::Activation activation = nd::Activation::Relu;
};

struct CovarianceReport {
  std::vector<std::vector<double>> A;  // k x k, cov[y]
  std::vector<std::vector<std::optional<double>>> corr;
  std::vector<std::size_t> degenerate;  // indices with A_ii < 1e-12
};

// A = Lambda C Lambda^T; corr entries are absent for degenerate rows/columns.
CovarianceReport covariance_from(const nd::Tensor& lambda, const std::vector<std::vector<double>>& cov_x);

// Unbiased sample covariance of row vectors. Throws TooFewExamples below 2 rows.
std::vector<std::vector<double>> sample_covariance(const std::vector<std::vector<double>>& rows);

struct TrainResult {
  nd::LoopResult loop;
  double seconds = 0.0;
};

class CnnModel {
 public:
  CnnModel(const CnnConfig& config, std::size_t vocab_size, std::uint64_t seed);

  const CnnConfig& config() const { return config_; }
  std::size_t vocab_size() const { return vocab_size_; }
  nd::ParameterSet& params() { return params_; }
  const nd::ParameterSet& params() const { return params_; }
  nd::Parameter& param(std::string_view name) { return params_[params_.index_of(name)]; }
  const nd::Parameter& param(std::string_view name) const { return params_[params_.index_of(name)]; }
  std::vector<nd::BatchNormState>& bn_states() { return bn_; }

  // Logits [B x k]. Train mode binds parameters for backprop, uses batch
  // statistics, dropout and updates running statistics; Infer mode is const in
  // effect. Throws SequenceTooShort when a note is shorter than the widest window.
  nd::Var logits(nd::Graph& g, const SequenceBatch& batch, nd::Mode mode, nd::Rng& rng,
                 std::vector<ForwardTrace>* traces = nullptr);
  std::vector<ForwardTrace> infer(const SequenceBatch& batch) const;

  // Single note; indices up to the first pad are used. Train mode needs a
  // batch of >= 2 for the dense batch norm, so this is normally Infer.
  ForwardTrace forward(std::span<const std::int32_t> indices, nd::Mode mode, nd::Rng& rng);

  // Mean BCE over the batch, plus l2/2 * sum of squared decayed weights when
  // `with_penalty`. Throws EmptyBatch.
  nd::Var loss_batch(nd::Graph& g, const SequenceBatch& batch, const nd::Tensor& labels, nd::Mode mode,
                     nd::Rng& rng, bool with_penalty = true);

  TrainResult train(const corpus::Split<corpus::EncodedExample>& split, std::uint64_t seed);

  std::vector<ForwardTrace> infer_examples(std::span<const corpus::EncodedExample> examples) const;

  FilterView filter(std::size_t bank, std::size_t f) const;

  // Sets every batch-norm running mean/variance to the inference-mode
  // population statistics of `examples`, layer by layer (no dropout).
  void recalibrate_batch_norm(std::span<const corpus::EncodedExample> examples);

  // Empirical cov[x] over `examples` in inference mode, or identity.
  CovarianceReport medication_covariance(std::span<const corpus::EncodedExample> examples,
                                         bool identity_cov_x = false) const;

  std::vector<nd::NamedTensor> to_tensors() const;
  void load_tensors(const std::vector<nd::NamedTensor>& tensors);

 private:
  CnnConfig config_;
  std::size_t vocab_size_;
  nd::ParameterSet params_;
  std::vector<nd::BatchNormState> bn_;  // one per window bank, then the dense layer
};

notes::LabelVector predict(std::span<const double> probs);
std::vector<Medication> predicted_medications(std::span<const double> probs);

nd::Tensor label_tensor(std::span<const corpus::EncodedExample> examples, std::span<const std::size_t> rows);

}  // namespace medpred::model

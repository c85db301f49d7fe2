#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "medpred/nd/adam.hpp"
#include "medpred/nd/graph.hpp"
#include "medpred/nd/rng.hpp"

namespace medpred::nd {

struct LoopConfig {
  double lr = 0.01;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean data loss over the epoch's batches
  double l2_penalty = 0.0;  // weight_decay/2 * sum of squared decayed weights, end of epoch
  double val_score = 0.0;   // model-selection score, higher is better
  std::map<std::string, double> val_metrics;
};

struct Validation {
  double score = 0.0;
  std::map<std::string, double> metrics;
};

struct TrainingHooks {
  // Builds the mean data loss of one mini-batch in training mode.
  std::function<Var(Graph&, std::span<const std::size_t>, Rng&)> batch_loss;
  std::function<Validation()> validate;
  // Called whenever the validation score improves; snapshot the model here.
  std::function<void(int epoch)> on_improved;
};

struct LoopResult {
  int best_epoch = 0;
  double best_score = 0.0;
  std::vector<EpochRecord> history;
};

// Mini-batch Adam with early stopping on the validation score. A trailing
// batch of one example is merged into the previous batch.
LoopResult run_training(ParameterSet& params, std::size_t num_examples, const LoopConfig& config,
                        const TrainingHooks& hooks);

// Contiguous batches over a permutation, trailing singleton merged.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch_size);

}  // namespace medpred::nd

#include "medpred/nd/train_loop.hpp"

#include <numeric>

#include "medpred/error.hpp"

namespace medpred::nd {

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorCode::Config, "batch size must be positive");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start == 1 && !batches.empty()) {
      batches.back().push_back(order[start]);
    } else {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return batches;
}

LoopResult run_training(ParameterSet& params, std::size_t num_examples, const LoopConfig& config,
                        const TrainingHooks& hooks) {
  if (num_examples == 0) throw Error(ErrorCode::EmptyBatch, "no training examples");
  Rng rng(config.seed);
  AdamState adam = AdamState::for_params(params);
  std::vector<std::size_t> order(num_examples);
  std::iota(order.begin(), order.end(), 0);

  LoopResult result;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : make_batches(order, config.batch_size)) {
      Graph g;
      Var loss = hooks.batch_loss(g, batch, rng);
      params.zero_grad();
      g.backward(loss);
      adam_step(params, adam, config.lr, config.weight_decay);
      loss_sum += loss.value().item() * static_cast<double>(batch.size());
      seen += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.l2_penalty = 0.5 * config.weight_decay * params.decayed_sum_squares();
    Validation val = hooks.validate();
    rec.val_score = val.score;
    rec.val_metrics = std::move(val.metrics);
    result.history.push_back(rec);

    if (epoch == 1 || rec.val_score > result.best_score) {
      result.best_score = rec.val_score;
      result.best_epoch = epoch;
      since_best = 0;
      if (hooks.on_improved) hooks.on_improved(epoch);
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace medpred::nd

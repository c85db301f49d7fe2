#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medpred/corpus.hpp"
#include "medpred/nd/checkpoint.hpp"
#include "medpred/nd/train_loop.hpp"

namespace medpred::baselines {

struct LrConfig {
  double l2 = 1.0;  // C = 1 convention: sum of losses + l2/2 |w|^2
  double lr = 0.01;
  std::size_t batch_size = 64;
  int max_epochs = 100;
  int patience = 5;
};

// Eight independent classifiers over TF-IDF vectors. Each one is trained and
// early-stopped on its own label only.
struct LrParams {
  std::size_t dim = 0;
  nd::Tensor W;  // [8 x dim]
  nd::Tensor b;  // [8]
  std::vector<nd::LoopResult> history;  // per medication
};

struct MlpConfig {
  std::size_t hidden = 32;
  double l2 = 0.0;
  double lr = 0.01;
  double init_scale = 0.1;
  bool identity_init = false;  // needs hidden == input dim
  std::size_t batch_size = 64;
  int max_epochs = 200;
  int patience = 10;
};

struct MlpParams {
  std::size_t input = 0, hidden = 0;
  nd::Tensor W1, b1;  // [hidden x input], [hidden]
  nd::Tensor W2, b2;  // [8 x hidden], [8]
  nd::LoopResult history;
};

LrParams train_lr(const corpus::Split<corpus::EncodedExample>& split, std::size_t dim, const LrConfig& config,
                  std::uint64_t seed);
MlpParams train_mlp(const corpus::Split<corpus::EncodedExample>& split, const MlpConfig& config,
                    std::uint64_t seed);

std::vector<double> lr_probs(const LrParams& p, const corpus::SparseVector& x);
std::vector<double> mlp_probs(const MlpParams& p, std::span<const std::uint8_t> x);

// Same 0.5 threshold as the CNN.
std::vector<Medication> predict_baseline(const LrParams& p, const corpus::SparseVector& x);
std::vector<Medication> predict_baseline(const MlpParams& p, std::span<const std::uint8_t> x);

// Mean over examples of the summed per-label BCE.
double lr_loss(const LrParams& p, std::span<const corpus::EncodedExample> examples);
double mlp_loss(const MlpParams& p, std::span<const corpus::EncodedExample> examples);

std::vector<nd::NamedTensor> to_tensors(const LrParams& p);
std::vector<nd::NamedTensor> to_tensors(const MlpParams& p);
LrParams lr_from_tensors(const std::vector<nd::NamedTensor>& t);
MlpParams mlp_from_tensors(const std::vector<nd::NamedTensor>& t);

}  // namespace medpred::baselines

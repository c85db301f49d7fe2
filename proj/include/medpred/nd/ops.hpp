#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "medpred/nd/graph.hpp"
#include "medpred/nd/rng.hpp"

namespace medpred::nd {

enum class Mode { Train, Infer };

enum class Activation { Identity, Relu, Sigmoid, Tanh };

std::string_view activation_name(Activation a);
Activation activation_from_name(std::string_view name);

// --- dense algebra -------------------------------------------------------

// [m x p] * [p x q] -> [m x q]
Var matmul(Var a, Var b);
// x [B x in], w [out x in], bias [out] -> x * w^T + bias
Var linear(Var x, Var w, Var bias);
Var linear(Var x, Var w);
Var add(Var a, Var b);
// x [.. x f] + b [f] broadcast over leading dims
Var add_bias(Var x, Var b);
Var scale(Var a, double c);
Var sum(Var a);
Var sum_squares(Var a);
Var reshape(Var a, Shape shape);
// Concatenates [B x f_i] blocks along columns.
Var concat_cols(std::span<const Var> parts);

// --- elementwise ---------------------------------------------------------

Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var activate(Var x, Activation a);

// Inverted dropout: kept entries are scaled by 1/keep_rate in training mode;
// inference mode is the identity.
Var dropout(Var x, double keep_rate, Mode mode, Rng& rng);

// --- normalization -------------------------------------------------------

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  static BatchNormState for_features(std::size_t features);
};

// Normalizes the last dimension of x over all leading positions. With a
// non-empty `row_mask` (one byte per row of the flattened [N x f] view) only
// rows with mask != 0 contribute to batch statistics; masked rows output 0.
// Training mode updates the running statistics.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, Mode mode,
               std::span<const std::uint8_t> row_mask = {});

// --- convolution & pooling -----------------------------------------------

// Token embedding lookup: table [v x h], indices [B x L] row-major -> [B x L x h].
Var embedding(Var table, std::span<const std::int32_t> indices, std::size_t batch,
              std::size_t length);

// All filters of one window size over a batch of embedded notes.
// D [B x L x h], W [F x n x h], b [F] -> [B x (L-n+1) x F]. Position p of note
// i is valid when p + n <= lengths[i]; invalid positions output 0.
Var conv_bank(Var D, Var W, Var b, std::span<const std::size_t> lengths);

// Flattened-row validity mask matching conv_bank output for window size n.
std::vector<std::uint8_t> conv_valid_mask(std::span<const std::size_t> lengths,
                                          std::size_t positions, std::size_t n);

// Single filter over one note: c_i = act(<W, D[i:i+n-1]> + b).
// D [l x h], W [n x h], b [1] -> [l - n + 1]. Throws WindowTooLarge if l < n.
Var conv_window(Var D, Var W, Var b, Activation act);

// C [B x P x F]; pools each (note, filter) over its first valid[i] positions.
// Ties go to the lowest position. `argmax` (optional) receives B*F positions.
Var masked_max_pool(Var C, std::span<const std::size_t> valid,
                    std::vector<std::size_t>* argmax = nullptr);

struct PoolResult {
  Var value;
  std::size_t argmax;
};

// c [m] -> largest entry and its position. Throws EmptyInput for m == 0.
PoolResult max_pool(Var c);

// --- loss ----------------------------------------------------------------

// logits [k] or [B x k], labels same shape with entries in {0,1}.
// Returns sum over k of binary cross-entropy, averaged over rows.
Var bce_with_logits(Var logits, const Tensor& labels);

}  // namespace medpred::nd

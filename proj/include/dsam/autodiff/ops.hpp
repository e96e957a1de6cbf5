#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsam/autodiff/graph.hpp"

namespace dsam::ad {

// Probabilities entering binary cross-entropy are clamped to [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-7;

// a [m,k] x b [k,n] (or [k]) -> [m,n] (or [m]).
Var matmul(Var a, Var b);

// Element-wise binary ops. `b` either matches `a` exactly or is a column
// ([rows] or [rows,1]) broadcast across the trailing frame axis of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var tanh(Var a);
Var sigmoid(Var a);
Var abs(Var a);

// axis 0 normalizes each column, axis 1 normalizes each row.
Var softmax(Var a, std::size_t axis);

Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t length);
std::vector<Var> split(Var a, std::size_t axis, std::span<const std::size_t> sizes);
Var reshape(Var a, Shape shape);
// Contiguous range of the flattened values, reshaped.
Var flat_slice(Var a, std::size_t begin, Shape shape);

// Same-padded 1D convolution over the column (time) axis.
// x [in, L], weight [out, in * kernel] laid out as (in, tap), bias [out].
Var conv1d(Var x, Var weight, Var bias, std::size_t kernel, std::size_t dilation);

// Gathers table rows as columns: table [V, E], ids -> [E, ids.size()].
Var embedding(Var table, std::span<const std::size_t> ids);

struct LstmState {
  Var h;
  Var c;
};
// One LSTM step with gates ordered (input, forget, cell, output).
// weight [4H, in + H], bias [4H].
LstmState lstm_step(Var x, const LstmState& state, Var weight, Var bias);

Var linear(Var weight, Var x, Var bias);

Var sum(Var a);
// Sum of mask * a.
Var masked_sum(Var a, const Tensor& mask);
// sum(mask * (pred - target)^2) / normalizer; normalizer defaults to sum(mask).
Var mse(Var pred, const Tensor& target, const Tensor& mask, double normalizer = 0.0);
// Binary cross-entropy on probabilities (clamped), same normalization as mse.
Var bce(Var prob, const Tensor& target, const Tensor& mask, double normalizer = 0.0);
// logits [C, N]; labels[n] is the class of column n. Columns with mask 0 are
// skipped; normalizer defaults to the count of unmasked columns.
Var cross_entropy_logits(Var logits, std::span<const std::size_t> labels,
                         std::span<const double> column_mask = {}, double normalizer = 0.0);

// Identity forward, -scale * upstream backward.
Var gradient_reverse(Var x, double scale);

}  // namespace dsam::ad

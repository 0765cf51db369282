/*
 * Copyright 2026 The mpd Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MPD_TAPE_H_
#define MPD_TAPE_H_

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mpd/kernels.h"
#include "mpd/matrix.h"
#include "mpd/rng.h"

namespace mpd {

// Reverse-mode gradient tape over a fixed operator set. Values are batches
// of row vectors (B x width). A tape is built by a forward pass and consumed
// by exactly one call to Backward.
class Tape {
 public:
  struct Var {
    std::size_t id;
  };

  // Candidate columns per batch row, used by the masked normalisations.
  using Candidates = std::vector<std::vector<std::size_t>>;

  explicit Tape(kernels::Exec exec = kernels::Exec::kParallel) : exec_(exec) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Leaf holding data. With requires_grad its gradient is available after
  // Backward.
  Var Input(Matrix value, bool requires_grad = false);
  // Leaf bound to a parameter by address; registering the same matrix twice
  // returns the same node. A non-trainable parameter is a frozen input.
  Var Parameter(const Matrix& param, bool trainable = true);

  // y = x W^T + b with x: B x u, W: v x u, b: 1 x v.
  Var Affine(Var x, Var weight, Var bias);
  Var Relu(Var x);
  Var Sigmoid(Var x);
  // Inverted dropout: keeps with probability 1 - rate, scales by 1/(1 - rate).
  Var Dropout(Var x, double rate, CounterRng& rng);
  Var ConcatCols(Var a, Var b);
  // x * m and x * m^T for a matrix that never receives gradient. The matrix
  // must outlive the tape.
  // m is held by reference until Backward.
  Var MatMulFrozen(Var x, const Matrix& m);
  Var MatMulFrozenT(Var x, const Matrix& m);
  Var Add(Var a, Var b);
  Var Mul(Var a, Var b);
  Var Scale(Var x, double factor);
  // Softmax restricted to each row's candidate columns; zero elsewhere.
  Var MaskedSoftmax(Var logits, const Candidates& candidates);
  // Divides each row's candidate entries by their sum; zero elsewhere.
  // Entries must be positive.
  Var MaskedRenormalize(Var x, const Candidates& candidates);
  // N x 1 column of x(row, col) for each index pair.
  Var Gather(Var x, std::vector<std::pair<std::size_t, std::size_t>> index);
  // Sums rows of an N x 1 column into num_segments buckets.
  Var SegmentSum(Var x, std::vector<std::size_t> segment, std::size_t num_segments);
  Var Log(Var x);
  Var Sum(Var x);
  Var Mean(Var x);
  // Mean Bernoulli cross-entropy of an N x 1 probability column. Probabilities
  // are clamped to [kProbClamp, 1 - kProbClamp]; clamped entries pass no
  // gradient.
  Var BinaryCrossEntropy(Var probs, std::span<const int> labels);
  // Mean of -log P(row, gold[row]) with the same clamp.
  Var CategoricalNll(Var probs, std::span<const std::size_t> gold);

  static constexpr double kProbClamp = 1e-12;

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  std::size_t size() const { return nodes_.size(); }

  // Propagates seed (shaped like root's value) back through the tape.
  void Backward(Var root, const Matrix& seed);
  // Scalar root, seed 1.
  void Backward(Var root);
  bool consumed() const { return consumed_; }

  // Gradient of any node after Backward; zeros when unreached.
  const Matrix& grad(Var v) const;
  // Gradient of a registered parameter; nullptr when not on the tape.
  const Matrix* ParamGrad(const Matrix& param) const;

  // Signs of every ReLU pre-activation, in tape order. Used by gradient
  // checks to detect finite-difference steps that cross a kink.
  std::vector<bool> ReluPattern() const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var Push(Matrix value, bool requires_grad, const char* op,
           std::function<void(Tape&, std::size_t)> backward);
  bool NeedsGrad(Var v) const { return nodes_[v.id].requires_grad; }
  Matrix& GradSlot(std::size_t id);
  void Accumulate(std::size_t id, const Matrix& g);
  const Matrix& GradOf(std::size_t id) const { return nodes_[id].grad; }

  kernels::Exec exec_;
  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, std::size_t> params_;
  std::vector<std::size_t> relu_inputs_;
  bool consumed_ = false;
};

}  // namespace mpd

#endif  // MPD_TAPE_H_

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

#include "mpd/tape.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "mpd/error.h"

namespace mpd {
namespace {

double SigmoidScalar(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void CheckCandidates(const Matrix& x, const Tape::Candidates& candidates, const char* op) {
  if (candidates.size() != x.rows()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(candidates.size()) +
                     " candidate rows for " + x.ShapeString());
  }
  for (const auto& row : candidates) {
    if (row.empty()) throw ShapeError(std::string(op) + ": empty candidate set");
    for (std::size_t c : row) {
      if (c >= x.cols()) throw ShapeError(std::string(op) + ": candidate column out of range");
    }
  }
}

}  // namespace

Tape::Var Tape::Push(Matrix value, bool requires_grad, const char* op,
                     std::function<void(Tape&, std::size_t)> backward) {
  if (consumed_) throw RuntimeError("tape already consumed by Backward");
  if (!value.AllFinite()) {
    throw RuntimeError(std::string("non-finite value produced by ") + op);
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Matrix& Tape::GradSlot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::Accumulate(std::size_t id, const Matrix& g) {
  if (!nodes_[id].requires_grad) return;
  Matrix& slot = GradSlot(id);
  CheckShape(slot.SameShape(g), "Accumulate", slot, g);
  for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

Tape::Var Tape::Input(Matrix value, bool requires_grad) {
  return Push(std::move(value), requires_grad, "Input", [](Tape&, std::size_t) {});
}

Tape::Var Tape::Parameter(const Matrix& param, bool trainable) {
  if (auto it = params_.find(&param); it != params_.end()) return Var{it->second};
  Var v = Push(param, trainable, "Parameter", [](Tape&, std::size_t) {});
  params_.emplace(&param, v.id);
  return v;
}

Tape::Var Tape::Affine(Var x, Var weight, Var bias) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(weight);
  const Matrix& bv = value(bias);
  CheckShape(xv.cols() == wv.cols(), "Affine", xv, wv);
  CheckShape(bv.rows() == 1 && bv.cols() == wv.rows(), "Affine(bias)", wv, bv);
  Matrix y;
  kernels::GemmNT(xv, wv, y, exec_);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  const bool rg = NeedsGrad(x) || NeedsGrad(weight) || NeedsGrad(bias);
  return Push(std::move(y), rg, "Affine", [x, weight, bias](Tape& t, std::size_t self) {
    const Matrix& dy = t.GradOf(self);
    if (t.NeedsGrad(x)) {
      Matrix dx;
      kernels::GemmNN(dy, t.value(weight), dx, t.exec_);
      t.Accumulate(x.id, dx);
    }
    if (t.NeedsGrad(weight)) {
      Matrix dw;
      kernels::GemmTN(dy, t.value(x), dw, t.exec_);
      t.Accumulate(weight.id, dw);
    }
    if (t.NeedsGrad(bias)) {
      Matrix db(1, dy.cols());
      for (std::size_t r = 0; r < dy.rows(); ++r) {
        for (std::size_t c = 0; c < dy.cols(); ++c) db[c] += dy(r, c);
      }
      t.Accumulate(bias.id, db);
    }
  });
}

Tape::Var Tape::Relu(Var x) {
  Matrix y = value(x);
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  relu_inputs_.push_back(x.id);
  return Push(std::move(y), NeedsGrad(x), "Relu", [x](Tape& t, std::size_t self) {
    const Matrix& dy = t.GradOf(self);
    const Matrix& xv = t.value(x);
    Matrix dx(dy.rows(), dy.cols());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = xv[i] > 0.0 ? dy[i] : 0.0;
    t.Accumulate(x.id, dx);
  });
}

Tape::Var Tape::Sigmoid(Var x) {
  Matrix y = value(x);
  for (double& v : y.values()) v = SigmoidScalar(v);
  return Push(std::move(y), NeedsGrad(x), "Sigmoid", [x](Tape& t, std::size_t self) {
    const Matrix& dy = t.GradOf(self);
    const Matrix& s = t.nodes_[self].value;
    Matrix dx(dy.rows(), dy.cols());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * s[i] * (1.0 - s[i]);
    t.Accumulate(x.id, dx);
  });
}

Tape::Var Tape::Dropout(Var x, double rate, CounterRng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  const Matrix& xv = value(x);
  Matrix scale(xv.rows(), xv.cols());
  const double keep = 1.0 - rate;
  for (double& s : scale.values()) s = (rate == 0.0 || rng.Uniform() < keep) ? 1.0 / keep : 0.0;
  Matrix y = xv;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= scale[i];
  return Push(std::move(y), NeedsGrad(x), "Dropout",
              [x, scale = std::move(scale)](Tape& t, std::size_t self) {
                const Matrix& dy = t.GradOf(self);
                Matrix dx(dy.rows(), dy.cols());
                for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * scale[i];
                t.Accumulate(x.id, dx);
              });
}

Tape::Var Tape::ConcatCols(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  CheckShape(av.rows() == bv.rows(), "ConcatCols", av, bv);
  const std::size_t ca = av.cols();
  const std::size_t cb = bv.cols();
  Matrix y(av.rows(), ca + cb);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    std::copy(av.row(r).begin(), av.row(r).end(), y.row(r).begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), y.row(r).begin() + ca);
  }
  const bool rg = NeedsGrad(a) || NeedsGrad(b);
  return Push(std::move(y), rg, "ConcatCols", [a, b, ca, cb](Tape& t, std::size_t self) {
    const Matrix& dy = t.GradOf(self);
    Matrix da(dy.rows(), ca);
    Matrix db(dy.rows(), cb);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      auto row = dy.row(r);
      std::copy(row.begin(), row.begin() + ca, da.row(r).begin());
      std::copy(row.begin() + ca, row.end(), db.row(r).begin());
    }
    t.Accumulate(a.id, da);
    t.Accumulate(b.id, db);
  });
}

Tape::Var Tape::MatMulFrozen(Var x, const Matrix& m) {
  Matrix y;
  kernels::GemmNN(value(x), m, y, exec_);
  return Push(std::move(y), NeedsGrad(x), "MatMulFrozen", [x, &m](Tape& t, std::size_t self) {
    Matrix dx;
    kernels::GemmNT(t.GradOf(self), m, dx, t.exec_);
    t.Accumulate(x.id, dx);
  });
}

Tape::Var Tape::MatMulFrozenT(Var x, const Matrix& m) {
  Matrix y;
  kernels::GemmNT(value(x), m, y, exec_);
  return Push(std::move(y), NeedsGrad(x), "MatMulFrozenT", [x, &m](Tape& t, std::size_t self) {
    Matrix dx;
    kernels::GemmNN(t.GradOf(self), m, dx, t.exec_);
    t.Accumulate(x.id, dx);
  });
}

Tape::Var Tape::Add(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  CheckShape(av.SameShape(bv), "Add", av, bv);
  Matrix y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const bool rg = NeedsGrad(a) || NeedsGrad(b);
  return Push(std::move(y), rg, "Add", [a, b](Tape& t, std::size_t self) {
    const Matrix dy = t.GradOf(self);
    t.Accumulate(a.id, dy);
    t.Accumulate(b.id, dy);
  });
}

Tape::Var Tape::Mul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  CheckShape(av.SameShape(bv), "Mul", av, bv);
  Matrix y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const bool rg = NeedsGrad(a) || NeedsGrad(b);
  return Push(std::move(y), rg, "Mul", [a, b](Tape& t, std::size_t self) {
    const Matrix& dy = t.GradOf(self);
    if (t.NeedsGrad(a)) {
      Matrix da = t.value(b);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] *= dy[i];
      t.Accumulate(a.id, da);
    }
    if (t.NeedsGrad(b)) {
      Matrix db = t.value(a);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] *= dy[i];
      t.Accumulate(b.id, db);
    }
  });
}

Tape::Var Tape::Scale(Var x, double factor) {
  Matrix y = value(x);
  for (double& v : y.values()) v *= factor;
  return Push(std::move(y), NeedsGrad(x), "Scale", [x, factor](Tape& t, std::size_t self) {
    Matrix dx = t.GradOf(self);
    for (double& v : dx.values()) v *= factor;
    t.Accumulate(x.id, dx);
  });
}

Tape::Var Tape::MaskedSoftmax(Var logits, const Candidates& candidates) {
  const Matrix& z = value(logits);
  CheckCandidates(z, candidates, "MaskedSoftmax");
  Matrix y(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double hi = z(r, candidates[r].front());
    for (std::size_t c : candidates[r]) hi = std::max(hi, z(r, c));
    double total = 0.0;
    for (std::size_t c : candidates[r]) {
      y(r, c) = std::exp(z(r, c) - hi);
      total += y(r, c);
    }
    for (std::size_t c : candidates[r]) y(r, c) /= total;
  }
  return Push(std::move(y), NeedsGrad(logits), "MaskedSoftmax",
              [logits, candidates](Tape& t, std::size_t self) {
                const Matrix& dy = t.GradOf(self);
                const Matrix& p = t.nodes_[self].value;
                Matrix dz(dy.rows(), dy.cols());
                for (std::size_t r = 0; r < dy.rows(); ++r) {
                  double inner = 0.0;
                  for (std::size_t c : candidates[r]) inner += p(r, c) * dy(r, c);
                  for (std::size_t c : candidates[r]) dz(r, c) = p(r, c) * (dy(r, c) - inner);
                }
                t.Accumulate(logits.id, dz);
              });
}

Tape::Var Tape::MaskedRenormalize(Var x, const Candidates& candidates) {
  const Matrix& xv = value(x);
  CheckCandidates(xv, candidates, "MaskedRenormalize");
  Matrix y(xv.rows(), xv.cols());
  std::vector<double> totals(xv.rows(), 0.0);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c : candidates[r]) {
      if (!(xv(r, c) > 0.0)) throw RuntimeError("MaskedRenormalize: non-positive entry");
      totals[r] += xv(r, c);
    }
    for (std::size_t c : candidates[r]) y(r, c) = xv(r, c) / totals[r];
  }
  return Push(std::move(y), NeedsGrad(x), "MaskedRenormalize",
              [x, candidates, totals = std::move(totals)](Tape& t, std::size_t self) {
                const Matrix& dy = t.GradOf(self);
                const Matrix& p = t.nodes_[self].value;
                Matrix dx(dy.rows(), dy.cols());
                for (std::size_t r = 0; r < dy.rows(); ++r) {
                  double inner = 0.0;
                  for (std::size_t c : candidates[r]) inner += p(r, c) * dy(r, c);
                  for (std::size_t c : candidates[r]) dx(r, c) = (dy(r, c) - inner) / totals[r];
                }
                t.Accumulate(x.id, dx);
              });
}

Tape::Var Tape::Gather(Var x, std::vector<std::pair<std::size_t, std::size_t>> index) {
  const Matrix& xv = value(x);
  Matrix y(index.size(), 1);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto [r, c] = index[i];
    if (r >= xv.rows() || c >= xv.cols()) throw ShapeError("Gather: index out of range");
    y[i] = xv(r, c);
  }
  return Push(std::move(y), NeedsGrad(x), "Gather",
              [x, index = std::move(index)](Tape& t, std::size_t self) {
                const Matrix& dy = t.GradOf(self);
                const Matrix& xv = t.value(x);
                Matrix dx(xv.rows(), xv.cols());
                for (std::size_t i = 0; i < index.size(); ++i) {
                  dx(index[i].first, index[i].second) += dy[i];
                }
                t.Accumulate(x.id, dx);
              });
}

Tape::Var Tape::SegmentSum(Var x, std::vector<std::size_t> segment, std::size_t num_segments) {
  const Matrix& xv = value(x);
  if (xv.cols() != 1 || segment.size() != xv.rows()) {
    throw ShapeError("SegmentSum: expected an N x 1 column with N segment ids");
  }
  Matrix y(num_segments, 1);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] >= num_segments) throw ShapeError("SegmentSum: segment id out of range");
    y[segment[i]] += xv[i];
  }
  return Push(std::move(y), NeedsGrad(x), "SegmentSum",
              [x, segment = std::move(segment)](Tape& t, std::size_t self) {
                const Matrix& dy = t.GradOf(self);
                Matrix dx(segment.size(), 1);
                for (std::size_t i = 0; i < segment.size(); ++i) dx[i] = dy[segment[i]];
                t.Accumulate(x.id, dx);
              });
}

Tape::Var Tape::Log(Var x) {
  Matrix y = value(x);
  for (double& v : y.values()) {
    if (!(v > 0.0)) throw RuntimeError("Log: non-positive input");
    v = std::log(v);
  }
  return Push(std::move(y), NeedsGrad(x), "Log", [x](Tape& t, std::size_t self) {
    const Matrix& dy = t.GradOf(self);
    const Matrix& xv = t.value(x);
    Matrix dx(dy.rows(), dy.cols());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] / xv[i];
    t.Accumulate(x.id, dx);
  });
}

Tape::Var Tape::Sum(Var x) {
  double total = 0.0;
  for (double v : value(x).values()) total += v;
  return Push(Matrix(1, 1, total), NeedsGrad(x), "Sum", [x](Tape& t, std::size_t self) {
    const Matrix& xv = t.value(x);
    t.Accumulate(x.id, Matrix(xv.rows(), xv.cols(), t.GradOf(self)[0]));
  });
}

Tape::Var Tape::Mean(Var x) {
  const Matrix& xv = value(x);
  if (xv.empty()) throw ShapeError("Mean: empty input");
  double total = 0.0;
  for (double v : xv.values()) total += v;
  const double n = static_cast<double>(xv.size());
  return Push(Matrix(1, 1, total / n), NeedsGrad(x), "Mean", [x, n](Tape& t, std::size_t self) {
    const Matrix& xv = t.value(x);
    t.Accumulate(x.id, Matrix(xv.rows(), xv.cols(), t.GradOf(self)[0] / n));
  });
}

Tape::Var Tape::BinaryCrossEntropy(Var probs, std::span<const int> labels) {
  const Matrix& p = value(probs);
  if (p.cols() != 1 || p.rows() != labels.size() || p.rows() == 0) {
    throw ShapeError("BinaryCrossEntropy: expected a nonempty N x 1 column and N labels");
  }
  const double n = static_cast<double>(p.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    total -= labels[i] == 1 ? std::log(q) : std::log1p(-q);
  }
  std::vector<int> y(labels.begin(), labels.end());
  return Push(Matrix(1, 1, total / n), NeedsGrad(probs), "BinaryCrossEntropy",
              [probs, n, y = std::move(y)](Tape& t, std::size_t self) {
                const double g = t.GradOf(self)[0];
                const Matrix& p = t.value(probs);
                Matrix dp(p.rows(), 1);
                for (std::size_t i = 0; i < p.rows(); ++i) {
                  const double q = p[i];
                  if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
                  dp[i] = g * (y[i] == 1 ? -1.0 / q : 1.0 / (1.0 - q)) / n;
                }
                t.Accumulate(probs.id, dp);
              });
}

Tape::Var Tape::CategoricalNll(Var probs, std::span<const std::size_t> gold) {
  const Matrix& p = value(probs);
  if (p.rows() != gold.size() || p.rows() == 0) {
    throw ShapeError("CategoricalNll: expected one gold column per nonempty batch row");
  }
  const double n = static_cast<double>(p.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    if (gold[r] >= p.cols()) throw ShapeError("CategoricalNll: gold column out of range");
    total -= std::log(std::clamp(p(r, gold[r]), kProbClamp, 1.0 - kProbClamp));
  }
  std::vector<std::size_t> g(gold.begin(), gold.end());
  return Push(Matrix(1, 1, total / n), NeedsGrad(probs), "CategoricalNll",
              [probs, n, g = std::move(g)](Tape& t, std::size_t self) {
                const double up = t.GradOf(self)[0];
                const Matrix& p = t.value(probs);
                Matrix dp(p.rows(), p.cols());
                for (std::size_t r = 0; r < p.rows(); ++r) {
                  const double q = p(r, g[r]);
                  if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
                  dp(r, g[r]) = -up / (q * n);
                }
                t.Accumulate(probs.id, dp);
              });
}

void Tape::Backward(Var root, const Matrix& seed) {
  if (consumed_) throw RuntimeError("tape already consumed by Backward");
  if (root.id >= nodes_.size()) throw RuntimeError("Backward: root not on this tape");
  CheckShape(nodes_[root.id].value.SameShape(seed), "Backward(seed)", nodes_[root.id].value,
             seed);
  consumed_ = true;
  if (nodes_[root.id].requires_grad) {
    GradSlot(root.id) = seed;
    for (std::size_t id = root.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, id);
    }
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) GradSlot(id);
}

void Tape::Backward(Var root) { Backward(root, Matrix(1, 1, 1.0)); }

const Matrix& Tape::grad(Var v) const {
  if (!consumed_) throw RuntimeError("grad requested before Backward");
  return nodes_.at(v.id).grad;
}

const Matrix* Tape::ParamGrad(const Matrix& param) const {
  if (!consumed_) throw RuntimeError("grad requested before Backward");
  auto it = params_.find(&param);
  if (it == params_.end() || !nodes_[it->second].requires_grad) return nullptr;
  return &nodes_[it->second].grad;
}

std::vector<bool> Tape::ReluPattern() const {
  std::vector<bool> pattern;
  for (std::size_t id : relu_inputs_) {
    for (double v : nodes_[id].value.values()) pattern.push_back(v > 0.0);
  }
  return pattern;
}

}  // namespace mpd

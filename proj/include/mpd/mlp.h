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

#ifndef MPD_MLP_H_
#define MPD_MLP_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mpd/matrix.h"
#include "mpd/rng.h"
#include "mpd/tape.h"

namespace mpd {

// A named handle on a trainable matrix. Parameter lists are ordered and the
// order is what checkpoints and optimizer state are keyed by.
struct ParamRef {
  std::string name;
  Matrix* value;
};

struct MlpConfig {
  std::size_t input = 0;   // u
  std::size_t output = 0;  // v
  std::size_t layers = 1;  // n
  std::size_t hidden = 0;  // h; unused when layers == 1
  double dropout = 0.0;    // x

  void Validate() const;
  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct MlpLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
};

// Each layer applies dropout to its input, then an affine map, then ReLU,
// except the final layer which has no ReLU.
struct MlpParams {
  MlpConfig config;
  std::vector<MlpLayer> layers;

  void AppendParams(const std::string& prefix, std::vector<ParamRef>& out);
};

// Glorot-uniform weights in +/- sqrt(6 / (fan_in + fan_out)), zero biases.
MlpParams InitMlp(const MlpConfig& config, CounterRng rng);
// All weights and biases zero.
MlpParams ZeroMlp(const MlpConfig& config);

// Adds the network to a tape. In train mode dropout draws from rng, which
// must then be non-null; in eval mode dropout is the identity.
Tape::Var MlpForward(Tape& tape, const MlpParams& params, Tape::Var input, bool train,
                     CounterRng* rng, bool trainable = true);

struct MlpResult {
  std::vector<double> output;
  Tape tape;
  Tape::Var input;
  Tape::Var out;
};

// Single-vector forward pass that keeps the tape for a later Backward.
MlpResult MlpForward(const MlpParams& params, std::span<const double> input, bool train,
                     CounterRng* rng);

}  // namespace mpd

#endif  // MPD_MLP_H_

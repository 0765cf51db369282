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

#include "mpd/mlp.h"

#include <cmath>

#include "mpd/error.h"

namespace mpd {

void MlpConfig::Validate() const {
  if (input == 0 || output == 0) throw ConfigError("MLP input and output sizes must be positive");
  if (layers == 0) throw ConfigError("MLP needs at least one layer");
  if (layers > 1 && hidden == 0) throw ConfigError("MLP hidden size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("MLP dropout must lie in [0, 1)");
}

void MlpParams::AppendParams(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = prefix + ".layer" + std::to_string(i);
    out.push_back({base + ".weight", &layers[i].weight});
    out.push_back({base + ".bias", &layers[i].bias});
  }
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> LayerShapes(const MlpConfig& c) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;  // (in, out)
  std::size_t in = c.input;
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::size_t out = i + 1 == c.layers ? c.output : c.hidden;
    shapes.emplace_back(in, out);
    in = out;
  }
  return shapes;
}

}  // namespace

MlpParams InitMlp(const MlpConfig& config, CounterRng rng) {
  config.Validate();
  MlpParams params{config, {}};
  for (auto [in, out] : LayerShapes(config)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    MlpLayer layer{Matrix(out, in), Matrix(1, out)};
    for (double& w : layer.weight.values()) w = (2.0 * rng.Uniform() - 1.0) * bound;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

MlpParams ZeroMlp(const MlpConfig& config) {
  config.Validate();
  MlpParams params{config, {}};
  for (auto [in, out] : LayerShapes(config)) {
    params.layers.push_back({Matrix(out, in), Matrix(1, out)});
  }
  return params;
}

Tape::Var MlpForward(Tape& tape, const MlpParams& params, Tape::Var input, bool train,
                     CounterRng* rng, bool trainable) {
  const Matrix& x = tape.value(input);
  if (x.cols() != params.config.input) {
    throw ShapeError("MLP expects input width " + std::to_string(params.config.input) +
                     ", got " + std::to_string(x.cols()));
  }
  if (train && params.config.dropout > 0.0 && rng == nullptr) {
    throw ConfigError("train-mode MLP forward needs a dropout generator");
  }
  Tape::Var h = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    if (train && params.config.dropout > 0.0) h = tape.Dropout(h, params.config.dropout, *rng);
    h = tape.Affine(h, tape.Parameter(params.layers[i].weight, trainable),
                    tape.Parameter(params.layers[i].bias, trainable));
    if (i + 1 < params.layers.size()) h = tape.Relu(h);
  }
  return h;
}

MlpResult MlpForward(const MlpParams& params, std::span<const double> input, bool train,
                     CounterRng* rng) {
  if (input.size() != params.config.input) {
    throw ShapeError("MLP expects input width " + std::to_string(params.config.input) +
                     ", got " + std::to_string(input.size()));
  }
  Tape tape;
  Tape::Var in = tape.Input(Matrix::RowVector(input), /*requires_grad=*/true);
  Tape::Var out = MlpForward(tape, params, in, train, rng);
  std::vector<double> values(tape.value(out).values().begin(), tape.value(out).values().end());
  return MlpResult{std::move(values), std::move(tape), in, out};
}

}  // namespace mpd

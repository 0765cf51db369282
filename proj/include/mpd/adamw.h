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

#ifndef MPD_ADAMW_H_
#define MPD_ADAMW_H_

#include <cstdint>
#include <span>
#include <vector>

#include "mpd/matrix.h"
#include "mpd/mlp.h"

namespace mpd {

struct AdamWOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay Adam. Moments are kept per parameter in the order
// the parameters were registered.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::span<const ParamRef> params, AdamWOptions options);

  // One update of every parameter whose gradient is non-null. Parameters with
  // a null gradient keep their value and moments.
  void Step(std::span<const ParamRef> params, std::span<const Matrix* const> grads);

  AdamWOptions& options() { return options_; }
  const AdamWOptions& options() const { return options_; }
  std::uint64_t step() const { return step_; }

  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_step(std::uint64_t step) { step_ = step; }

 private:
  AdamWOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t step_ = 0;
};

}  // namespace mpd

#endif  // MPD_ADAMW_H_

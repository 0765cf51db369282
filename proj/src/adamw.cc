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

#include "mpd/adamw.h"

#include <cmath>

#include "mpd/error.h"

namespace mpd {

AdamW::AdamW(std::span<const ParamRef> params, AdamWOptions options) : options_(options) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const ParamRef& p : params) {
    m_.emplace_back(p.value->rows(), p.value->cols());
    v_.emplace_back(p.value->rows(), p.value->cols());
  }
}

void AdamW::Step(std::span<const ParamRef> params, std::span<const Matrix* const> grads) {
  if (params.size() != m_.size() || grads.size() != params.size()) {
    throw ShapeError("AdamW: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(m_.size()) + " moment slots");
  }
  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double lr = options_.learning_rate;
  const double wd = options_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i] == nullptr) continue;
    Matrix& p = *params[i].value;
    const Matrix& g = *grads[i];
    CheckShape(p.SameShape(g) && p.SameShape(m_[i]), "AdamW", p, g);
    for (std::size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = b1 * m_[i][j] + (1.0 - b1) * g[j];
      v_[i][j] = b2 * v_[i][j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m_[i][j] / c1;
      const double v_hat = v_[i][j] / c2;
      p[j] -= lr * (m_hat / (std::sqrt(v_hat) + options_.eps) + wd * p[j]);
    }
  }
}

}  // namespace mpd

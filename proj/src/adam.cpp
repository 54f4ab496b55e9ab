// Copyright 2026 The Wayspeak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wayspeak/adam.hpp"

#include <cmath>

#include "wayspeak/error.hpp"

namespace wayspeak {

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig config)
    : config_(config) {
  first_moment_.reserve(params.size());
  second_moment_.reserve(params.size());
  for (const Tensor& p : params) {
    first_moment_.emplace_back(p.size(), 0.0);
    second_moment_.emplace_back(p.size(), 0.0);
  }
}

void AdamState::step(std::vector<Tensor>& params) {
  if (params.size() != first_moment_.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) +
                         " params against state for " +
                         std::to_string(first_moment_.size()));
  }
  ++step_count_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    auto& m = first_moment_[i];
    auto& v = second_moment_[i];
    if (p.size() != m.size()) {
      throw DimensionError("adam: param " + std::to_string(i) + " has " +
                           std::to_string(p.size()) + " elements, state has " +
                           std::to_string(m.size()));
    }
    if (!p.has_grad()) continue;  // zero gradient: moments decay to zero too
    const auto& g = p.grad();
    auto& x = p.values();
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      x[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace wayspeak

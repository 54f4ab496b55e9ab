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

#pragma once

#include <cstdint>
#include <vector>

#include "wayspeak/tensor.hpp"

namespace wayspeak {

struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moments are aligned
// with the list order; the list must not change between steps.
class AdamState {
 public:
  AdamState(const std::vector<Tensor>& params, AdamConfig config);

  // In-place update from each parameter's accumulated gradient
  // (missing gradients count as zero). Does not clear gradients.
  void step(std::vector<Tensor>& params);

  std::uint64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::uint64_t step_count_ = 0;
};

}  // namespace wayspeak

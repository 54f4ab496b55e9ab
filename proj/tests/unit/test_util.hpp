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

#include <cmath>
#include <functional>

#include "wayspeak/tensor.hpp"

namespace testutil {

// Central finite difference of a freshly evaluated scalar forward pass
// with respect to one coordinate of `param`.
inline double numeric_grad(const std::function<double()>& forward,
                           wayspeak::Tensor& param, std::size_t index,
                           double h = 1e-5) {
  const double saved = param.values()[index];
  param.values()[index] = saved + h;
  const double fp = forward();
  param.values()[index] = saved - h;
  const double fm = forward();
  param.values()[index] = saved;
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testutil

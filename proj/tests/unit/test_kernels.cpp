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

#include <cmath>
#include <vector>

#include "doctest.h"
#include "wayspeak/kernels.hpp"
#include "wayspeak/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace wayspeak;

namespace {

std::vector<double> random_matrix(std::size_t n, Rng& rng) {
  std::vector<double> m(n);
  for (double& v : m) v = rng.uniform(-2.0, 2.0);
  return m;
}

// Relative to the scale of the computation: reassociation noise on a
// length-k dot of O(1) values is ~k*eps even when the result cancels
// to near zero, so a unit floor keeps the comparison meaningful.
double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1.0});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_SUITE_BEGIN("kernels");

TEST_CASE("parallel gemms match the serial references") {
  Rng rng(17);
  // Shapes straddle the parallel cutoff, including single-row products.
  const std::size_t shapes[][3] = {
      {1, 68, 256}, {5, 256, 384}, {37, 256, 384}, {64, 512, 64}, {3, 7, 11}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], k = s[1], n = s[2];
    auto a = random_matrix(m * k, rng);
    auto b_nn = random_matrix(k * n, rng);
    auto b_nt = random_matrix(n * k, rng);
    auto a_tn = random_matrix(k * m, rng);

    std::vector<double> c1(m * n), c2(m * n);
    kern::gemm_nn(a.data(), b_nn.data(), c1.data(), m, k, n);
    kern::gemm_nn_serial(a.data(), b_nn.data(), c2.data(), m, k, n);
    CHECK(max_rel_err(c1, c2) < 1e-10);

    kern::gemm_nt(a.data(), b_nt.data(), c1.data(), m, k, n);
    kern::gemm_nt_serial(a.data(), b_nt.data(), c2.data(), m, k, n);
    CHECK(max_rel_err(c1, c2) < 1e-10);

    kern::gemm_tn(a_tn.data(), b_nn.data(), c1.data(), m, k, n);
    kern::gemm_tn_serial(a_tn.data(), b_nn.data(), c2.data(), m, k, n);
    CHECK(max_rel_err(c1, c2) < 1e-10);
  }
}

TEST_CASE("accumulate variants add onto existing output") {
  Rng rng(3);
  const std::size_t m = 9, k = 33, n = 21;
  auto a = random_matrix(m * k, rng);
  auto b = random_matrix(k * n, rng);
  std::vector<double> base = random_matrix(m * n, rng);
  std::vector<double> c_acc = base, prod(m * n);
  kern::gemm_nn(a.data(), b.data(), c_acc.data(), m, k, n, true);
  kern::gemm_nn_serial(a.data(), b.data(), prod.data(), m, k, n);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(c_acc[i] == doctest::Approx(base[i] + prod[i]).epsilon(1e-12));
  }
}

TEST_CASE("results are bit-identical across thread counts") {
#ifdef _OPENMP
  Rng rng(23);
  const std::size_t m = 48, k = 300, n = 96;
  auto a = random_matrix(m * k, rng);
  auto b = random_matrix(k * n, rng);
  std::vector<double> one(m * n), many(m * n);

  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  kern::gemm_nn(a.data(), b.data(), one.data(), m, k, n);
  omp_set_num_threads(saved > 1 ? saved : 2);
  kern::gemm_nn(a.data(), b.data(), many.data(), m, k, n);
  omp_set_num_threads(saved);

  for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i] == many[i]);
#endif
}

TEST_SUITE_END();

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

#include "wayspeak/kernels.hpp"

#include <cstdint>

namespace wayspeak::kern {

namespace {

// Work below this many multiply-adds is not worth a parallel region.
constexpr std::size_t kParallelCutoff = 1u << 15;

// Row-of-C accumulation in k order: c[i][:] += a[i][kk] * b[kk][:].
// The j loop is contiguous over both C and B, so it auto-vectorizes; the
// per-element accumulation order over kk is fixed.
inline void nn_row(const double* a_row, const double* b, double* c_row,
                   std::size_t k, std::size_t n, bool acc) {
  if (!acc) {
    for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
  }
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double aik = a_row[kk];
    const double* b_row = b + kk * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += aik * b_row[j];
  }
}

// Dot product with four fixed-order partial sums, then a fixed combine.
inline double dot4(const double* x, const double* y, std::size_t k) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= k; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  for (; i < k; ++i) s0 += x[i] * y[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool acc) {
  const bool parallel = m * k * n >= kParallelCutoff && m > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    nn_row(a + static_cast<std::size_t>(i) * k, b,
           c + static_cast<std::size_t>(i) * n, k, n, acc);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool acc) {
  const bool parallel = m * k * n >= kParallelCutoff && m > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    const double* a_row = a + static_cast<std::size_t>(i) * k;
    double* c_row = c + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dot4(a_row, b + j * k, k);
      c_row[j] = acc ? c_row[j] + d : d;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool acc) {
  const bool parallel = m * k * n >= kParallelCutoff && m > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    // c[i][:] = sum_p a[p][i] * b[p][:], accumulated in p order.
    double* c_row = c + static_cast<std::size_t>(i) * n;
    if (!acc) {
      for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double api = a[p * m + static_cast<std::size_t>(i)];
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += api * b_row[j];
    }
  }
}

void gemm_nn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = acc ? c[i * n + j] : 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = s;
    }
  }
}

void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = acc ? c[i * n + j] : 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[j * k + kk];
      c[i * n + j] = s;
    }
  }
}

void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = acc ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

}  // namespace wayspeak::kern

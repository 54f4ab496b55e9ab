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

#include <cstddef>

// Dense f64 kernels behind all tensor math. The gemm_* family is
// OpenMP-parallel; the *_serial functions are the plain triple-loop
// references kept for testing and benchmarking.
//
// Determinism contract: every output element is produced by exactly one
// thread using a fixed accumulation order, so results are bit-identical
// across runs and across thread counts.

namespace wayspeak::kern {

// C[m x n] = A[m x k] * B[k x n]            (acc: C += instead of =)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool acc = false);

// C[m x n] = A[m x k] * B[n x k]^T          (rows of A dotted with rows of B)
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool acc = false);

// C[m x n] = A[k x m]^T * B[k x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool acc = false);

// Naive ijk references.
void gemm_nn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool acc = false);
void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool acc = false);
void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool acc = false);

}  // namespace wayspeak::kern

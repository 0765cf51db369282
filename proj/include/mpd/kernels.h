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

#ifndef MPD_KERNELS_H_
#define MPD_KERNELS_H_

#include <cstddef>

#include "mpd/matrix.h"

// Dense products used by the autodiff engine. Every kernel exists twice: a
// serial reference and an OpenMP version that partitions output rows across
// threads. Each output element is accumulated by exactly one thread in the
// same order as the serial loop, so the two agree bitwise.
namespace mpd::kernels {

enum class Exec { kSerial, kParallel };

// Work (multiply-adds) below which the parallel kernels run inline.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

int MaxThreads();

namespace serial {
// out = a * b^T      a: m x p, b: n x p, out: m x n
void GemmNT(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b        a: m x p, b: p x n
void GemmNN(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b      a: p x m, b: p x n
void GemmTN(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace serial

namespace omp {
void GemmNT(const Matrix& a, const Matrix& b, Matrix& out);
void GemmNN(const Matrix& a, const Matrix& b, Matrix& out);
void GemmTN(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace omp

// Dispatchers. kParallel falls back to the serial loop for small problems.
void GemmNT(const Matrix& a, const Matrix& b, Matrix& out, Exec exec = Exec::kParallel);
void GemmNN(const Matrix& a, const Matrix& b, Matrix& out, Exec exec = Exec::kParallel);
void GemmTN(const Matrix& a, const Matrix& b, Matrix& out, Exec exec = Exec::kParallel);

}  // namespace mpd::kernels

#endif  // MPD_KERNELS_H_

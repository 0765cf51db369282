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

#include "mpd/kernels.h"

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mpd/error.h"

namespace mpd::kernels {
namespace {

void PrepareNT(const Matrix& a, const Matrix& b, Matrix& out) {
  CheckShape(a.cols() == b.cols(), "GemmNT", a, b);
  if (out.rows() != a.rows() || out.cols() != b.rows()) out = Matrix(a.rows(), b.rows());
}

void PrepareNN(const Matrix& a, const Matrix& b, Matrix& out) {
  CheckShape(a.cols() == b.rows(), "GemmNN", a, b);
  if (out.rows() != a.rows() || out.cols() != b.cols()) out = Matrix(a.rows(), b.cols());
}

void PrepareTN(const Matrix& a, const Matrix& b, Matrix& out) {
  CheckShape(a.rows() == b.rows(), "GemmTN", a, b);
  if (out.rows() != a.cols() || out.cols() != b.cols()) out = Matrix(a.cols(), b.cols());
}

// Row kernels shared by both implementations; the loop order inside a row is
// what fixes the floating-point summation order.
inline void RowNT(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t p = a.cols();
  const double* ar = a.data() + i * p;
  double* orow = out.data() + i * out.cols();
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* br = b.data() + j * p;
    double acc = 0.0;
    for (std::size_t q = 0; q < p; ++q) acc += ar[q] * br[q];
    orow[j] = acc;
  }
}

inline void RowNN(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t n = b.cols();
  double* orow = out.data() + i * n;
  for (std::size_t j = 0; j < n; ++j) orow[j] = 0.0;
  for (std::size_t q = 0; q < a.cols(); ++q) {
    const double aiq = a(i, q);
    if (aiq == 0.0) continue;
    const double* br = b.data() + q * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] += aiq * br[j];
  }
}

inline void RowTN(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t n = b.cols();
  double* orow = out.data() + i * n;
  for (std::size_t j = 0; j < n; ++j) orow[j] = 0.0;
  for (std::size_t q = 0; q < a.rows(); ++q) {
    const double aqi = a(q, i);
    if (aqi == 0.0) continue;
    const double* br = b.data() + q * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] += aqi * br[j];
  }
}

template <class RowFn>
void RunParallel(std::size_t rows, RowFn fn) {
  const long long n = static_cast<long long>(rows);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
}

}  // namespace

int MaxThreads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void GemmNT(const Matrix& a, const Matrix& b, Matrix& out) {
  PrepareNT(a, b, out);
  for (std::size_t i = 0; i < a.rows(); ++i) RowNT(a, b, out, i);
}

void GemmNN(const Matrix& a, const Matrix& b, Matrix& out) {
  PrepareNN(a, b, out);
  for (std::size_t i = 0; i < a.rows(); ++i) RowNN(a, b, out, i);
}

void GemmTN(const Matrix& a, const Matrix& b, Matrix& out) {
  PrepareTN(a, b, out);
  for (std::size_t i = 0; i < a.cols(); ++i) RowTN(a, b, out, i);
}

}  // namespace serial

namespace omp {

void GemmNT(const Matrix& a, const Matrix& b, Matrix& out) {
  PrepareNT(a, b, out);
  RunParallel(a.rows(), [&](std::size_t i) { RowNT(a, b, out, i); });
}

void GemmNN(const Matrix& a, const Matrix& b, Matrix& out) {
  PrepareNN(a, b, out);
  RunParallel(a.rows(), [&](std::size_t i) { RowNN(a, b, out, i); });
}

void GemmTN(const Matrix& a, const Matrix& b, Matrix& out) {
  PrepareTN(a, b, out);
  RunParallel(a.cols(), [&](std::size_t i) { RowTN(a, b, out, i); });
}

}  // namespace omp

namespace {
bool UseParallel(Exec exec, std::size_t work) {
  return exec == Exec::kParallel && work >= kParallelThreshold && MaxThreads() > 1;
}
}  // namespace

void GemmNT(const Matrix& a, const Matrix& b, Matrix& out, Exec exec) {
  if (UseParallel(exec, a.rows() * a.cols() * b.rows())) {
    omp::GemmNT(a, b, out);
  } else {
    serial::GemmNT(a, b, out);
  }
}

void GemmNN(const Matrix& a, const Matrix& b, Matrix& out, Exec exec) {
  if (UseParallel(exec, a.rows() * a.cols() * b.cols())) {
    omp::GemmNN(a, b, out);
  } else {
    serial::GemmNN(a, b, out);
  }
}

void GemmTN(const Matrix& a, const Matrix& b, Matrix& out, Exec exec) {
  if (UseParallel(exec, a.rows() * a.cols() * b.cols())) {
    omp::GemmTN(a, b, out);
  } else {
    serial::GemmTN(a, b, out);
  }
}

}  // namespace mpd::kernels

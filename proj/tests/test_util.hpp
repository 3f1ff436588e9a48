/* Copyright 2026 The mglp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef MGLP_TESTS_TEST_UTIL_HPP_
#define MGLP_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "mglp/rng.hpp"
#include "mglp/tensor.hpp"

namespace mglp::testutil {

// |a - b| / max(1, |a|, |b|): relative for large magnitudes, absolute near
// zero. Same formula the finite-difference checks report.
inline double rel_err(double a, double b) {
  double denom = std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
  return std::fabs(a - b) / denom;
}

// Largest element-wise deviation, scaled by the largest magnitude present.
inline double max_rel_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
  double maxmag = 0.0, maxdiff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    maxmag = std::max(maxmag, std::max(std::fabs(a.data()[i]), std::fabs(b.data()[i])));
    maxdiff = std::max(maxdiff, std::fabs(a.data()[i] - b.data()[i]));
  }
  if (maxmag == 0.0) return maxdiff;
  return maxdiff / maxmag;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;  // NaN would also fail, good
  }
  return true;
}

// Largest singular value of a [m, n] matrix by power iteration on A^T A.
inline double sigma_max(const Tensor& a) {
  const std::size_t n = a.dim(1);
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  std::vector<double> av(a.dim(0)), atav(n);
  for (int it = 0; it < 300; ++it) {
    for (std::size_t i = 0; i < a.dim(0); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a.data()[i * n + j] * v[j];
      av[i] = s;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.dim(0); ++i)
        s += a.data()[i * n + j] * av[i];
      atav[j] = s;
    }
    double nrm = 0.0;
    for (double x : atav) nrm += x * x;
    nrm = std::sqrt(nrm);
    for (std::size_t j = 0; j < n; ++j) v[j] = atav[j] / nrm;
  }
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a.data()[i * n + j] * v[j];
    av[i] = s;
  }
  double nrm = 0.0;
  for (double x : av) nrm += x * x;
  return std::sqrt(nrm);
}

inline Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                            double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = stddev * rng::gaussian(seed, rng::kTestOnly, i);
  return t;
}

// Central finite difference of a scalar function along direction v applied to
// the parameter tensor in place.
inline double central_diff(Tensor& param, const Tensor& v,
                           const std::function<double()>& f, double step) {
  Tensor saved = param;
  axpy(param, step, v);
  double fp = f();
  param = saved;
  axpy(param, -step, v);
  double fm = f();
  param = saved;
  return (fp - fm) / (2.0 * step);
}

}  // namespace mglp::testutil

#endif  // MGLP_TESTS_TEST_UTIL_HPP_

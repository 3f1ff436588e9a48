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
#ifndef MGLP_SYSTEMS_HPP_
#define MGLP_SYSTEMS_HPP_

#include <cstddef>
#include <utility>
#include <vector>

#include "mglp/blocks.hpp"
#include "mglp/errors.hpp"

namespace mglp {

// Scalar dynamics z' = rate(t)·z with one rate per fine step. Small enough to
// have closed-form solutions, which makes it the reference problem for solver
// tests and benchmarks.
class ScalarLinearSystem {
 public:
  using State = double;

  ScalarLinearSystem(std::vector<double> rates, double h, int coarsen)
      : rates_(std::move(rates)), h_(h), c_f_(coarsen) {
    if (rates_.empty()) throw ValidationError("ScalarLinearSystem: no steps");
    if (c_f_ < 2) throw ValidationError("ScalarLinearSystem: coarsen must be >= 2");
  }

  static ScalarLinearSystem uniform(double rate, int n_steps, double h,
                                    int coarsen) {
    return ScalarLinearSystem(std::vector<double>(n_steps, rate), h, coarsen);
  }

  int n_steps() const { return static_cast<int>(rates_.size()); }

  double phi(int level, int k, const double& z) const {
    long long stride = 1;
    for (int l = 0; l < level; ++l) stride *= c_f_;
    const double dt = static_cast<double>(stride) * h_;
    return z + dt * rates_[static_cast<std::size_t>(k) * stride] * z;
  }

  double add(double a, double b) const { return a + b; }
  double sub(double a, double b) const { return a - b; }
  double zeros_like(const double&) const { return 0.0; }
  double norm_sq(const double& s) const { return s * s; }

  // Fine-grid sequential propagation, the solver's ground truth.
  std::vector<double> serial_solution(double z0) const {
    std::vector<double> v(rates_.size() + 1);
    v[0] = z0;
    for (std::size_t j = 1; j < v.size(); ++j) v[j] = phi(0, j - 1, v[j - 1]);
    return v;
  }

 private:
  std::vector<double> rates_;
  double h_;
  int c_f_;
};

// Time-stepping view of a LayerStack's interior window: level-l step k uses
// the layer at the matching fine index with step size stride*h.
class StackForwardSystem {
 public:
  using State = mglp::State;

  StackForwardSystem(const LayerStack& stack, int coarsen)
      : stack_(stack), c_f_(coarsen) {
    if (c_f_ < 2) throw ValidationError("StackForwardSystem: coarsen must be >= 2");
  }

  int n_steps() const { return stack_.interior_layers(); }

  State phi(int level, int k, const State& z) const {
    long long stride = 1;
    for (int l = 0; l < level; ++l) stride *= c_f_;
    const int layer = stack_.interior_begin() + static_cast<int>(k * stride);
    const double dt = static_cast<double>(stride) * stack_.interior_h();
    return stack_.step(layer, dt, z);
  }

  State add(const State& a, const State& b) const { return mglp::add(a, b); }
  State sub(const State& a, const State& b) const { return mglp::sub(a, b); }
  State zeros_like(const State& s) const { return mglp::zeros_like(s); }
  double norm_sq(const State& s) const { return mglp::norm_sq(s); }

 private:
  const LayerStack& stack_;
  int c_f_;
};

}  // namespace mglp

#endif  // MGLP_SYSTEMS_HPP_

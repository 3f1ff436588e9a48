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
#ifndef MGLP_LIPSCHITZ_HPP_
#define MGLP_LIPSCHITZ_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mglp/blocks.hpp"
#include "mglp/executor.hpp"
#include "mglp/tensor.hpp"

namespace mglp {

// Monte-Carlo probing of each layer's velocity field: how hard can it stretch
// a small perturbation. The estimates drive the choice of serially-executed
// edge layers and the per-layer amplification diagnostic.

struct ProbeConfig {
  int samples = 1000;
  double delta_scale = 1e-2;  // perturbation magnitude per element
  double input_scale = 1.0;   // base-point scale; match activation RMS
  int seq_len = 8;            // sequence length of probe inputs
};

struct LipschitzEstimate {
  int layer = 0;
  double estimate = 0.0;
  int samples = 0;
  double input_scale = 1.0;
  double delta_scale = 0.0;
  std::uint64_t seed = 0;
};

using ProbeFn = std::function<Tensor(const Tensor&)>;

// Max over sampled pairs of the stretch ratio of f on the given input shape.
// Sample i is a pure function of (seed, i), so estimates from nested sample
// counts share their draws and the executor cannot change the result.
LipschitzEstimate estimate_lipschitz(const ProbeFn& f,
                                     const std::vector<std::size_t>& shape,
                                     const ProbeConfig& cfg, std::uint64_t seed,
                                     Executor* ex = nullptr);

// Probes one layer's velocity field on its advancing stream. Layers that
// read a context stream get one frozen context draw for the whole probe.
LipschitzEstimate estimate_lipschitz(const LayerStack& stack, int layer,
                                     const ProbeConfig& cfg, std::uint64_t seed,
                                     Executor* ex = nullptr);

// All layers, buffers included.
std::vector<LipschitzEstimate> estimate_stack(const LayerStack& stack,
                                              const ProbeConfig& cfg,
                                              std::uint64_t seed,
                                              Executor* ex = nullptr);

// Which layers to take out of the parallel window, given the estimates.
struct BufferPlan {
  int k_open = 0;
  int k_close = 0;
  std::vector<int> buffered;   // flagged layer indices, ascending
  bool interior_spike = false; // an interior estimate tops every buffered one
  std::string warning;         // human-readable note when interior_spike
};

BufferPlan select_buffer_layers(const std::vector<LipschitzEstimate>& estimates,
                                int k_open, int k_close);

// Contiguous end runs whose one-step amplification 1 + h*estimate reaches the
// threshold. Always leaves at least one interior layer, trimming the larger
// run first when the two would meet.
struct BufferRecommendation {
  int k_open = 0;
  int k_close = 0;
  double amp_threshold = 2.0;
};

BufferRecommendation recommend_buffers(const std::vector<double>& amplification,
                                       double amp_threshold = 2.0);
BufferRecommendation recommend_buffers(
    const std::vector<LipschitzEstimate>& estimates, const LayerStack& stack,
    double amp_threshold = 2.0);

// Relative drift of every parameter tensor from a reference snapshot.
struct WeightChange {
  int layer = 0;
  std::string component;
  double rel_change = 0.0;  // kUndefinedChange when the reference norm is zero
};

inline constexpr double kUndefinedChange = -1.0;

std::vector<WeightChange> track_weight_change(std::vector<BlockParams> now,
                                              std::vector<BlockParams> base);

// Diagnostics tables. Amplification column is 1 + h * estimate with the
// layer's own step size.
std::string lipschitz_csv(const std::vector<LipschitzEstimate>& estimates,
                          const LayerStack& stack);
std::string weight_change_csv(const std::vector<WeightChange>& changes);

}  // namespace mglp

#endif  // MGLP_LIPSCHITZ_HPP_

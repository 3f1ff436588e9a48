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
#ifndef MGLP_OPTIMIZER_HPP_
#define MGLP_OPTIMIZER_HPP_

#include <vector>

#include "mglp/tensor.hpp"

namespace mglp {

enum class OptKind { kSgd, kAdam, kAdamW };

struct OptConfig {
  OptKind kind = OptKind::kAdamW;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled; AdamW only
  double momentum = 0.0;       // SGD only
};

// Elementwise first-order updates over a fixed tensor registry. Slot i of
// every internal buffer belongs to registry entry i, so the registry order
// is part of the training state and must stay stable across save/load.
class Optimizer {
 public:
  explicit Optimizer(OptConfig cfg);

  // Allocates zeroed state matching the registry shapes. Must be called once
  // before step(); repeated calls reset the state.
  void attach(const std::vector<Tensor*>& params);

  void step(const std::vector<Tensor*>& params,
            const std::vector<const Tensor*>& grads);

  const OptConfig& config() const { return cfg_; }
  long long steps() const { return t_; }

  // checkpoint plumbing
  std::vector<Tensor>& slot_m() { return m_; }
  std::vector<Tensor>& slot_v() { return v_; }
  const std::vector<Tensor>& slot_m() const { return m_; }
  const std::vector<Tensor>& slot_v() const { return v_; }
  void set_steps(long long t) { t_ = t; }

 private:
  OptConfig cfg_;
  long long t_ = 0;
  std::vector<Tensor> m_;  // momentum / first moment
  std::vector<Tensor> v_;  // second moment (adam family)
};

}  // namespace mglp

#endif  // MGLP_OPTIMIZER_HPP_

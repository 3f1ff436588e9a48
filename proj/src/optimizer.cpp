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
#include "mglp/optimizer.hpp"

#include <cmath>

#include "mglp/errors.hpp"

namespace mglp {

Optimizer::Optimizer(OptConfig cfg) : cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw ValidationError("Optimizer: lr must be positive");
  if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 ||
      cfg_.beta2 >= 1.0)
    throw ValidationError("Optimizer: betas must lie in [0, 1)");
  if (cfg_.eps <= 0.0) throw ValidationError("Optimizer: eps must be positive");
}

void Optimizer::attach(const std::vector<Tensor*>& params) {
  m_.clear();
  v_.clear();
  t_ = 0;
  const bool adam = cfg_.kind != OptKind::kSgd;
  const bool momentum = cfg_.kind == OptKind::kSgd && cfg_.momentum != 0.0;
  for (const Tensor* p : params) {
    if (adam || momentum) m_.push_back(Tensor::zeros_like(*p));
    if (adam) v_.push_back(Tensor::zeros_like(*p));
  }
}

void Optimizer::step(const std::vector<Tensor*>& params,
                     const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size())
    throw ContractViolation("Optimizer: parameter and gradient counts differ");
  const bool adam = cfg_.kind != OptKind::kSgd;
  if (adam && m_.size() != params.size())
    throw ContractViolation("Optimizer: attach() does not match this registry");
  ++t_;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (!p.same_shape(g))
      throw ContractViolation("Optimizer: gradient shape mismatch");

    if (cfg_.kind == OptKind::kSgd) {
      if (cfg_.momentum != 0.0) {
        Tensor& m = m_[i];
        for (std::size_t e = 0; e < p.size(); ++e) {
          m.data()[e] = cfg_.momentum * m.data()[e] + g.data()[e];
          p.data()[e] -= cfg_.lr * m.data()[e];
        }
      } else {
        for (std::size_t e = 0; e < p.size(); ++e)
          p.data()[e] -= cfg_.lr * g.data()[e];
      }
      continue;
    }

    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t e = 0; e < p.size(); ++e) {
      const double ge = g.data()[e];
      m.data()[e] = cfg_.beta1 * m.data()[e] + (1.0 - cfg_.beta1) * ge;
      v.data()[e] = cfg_.beta2 * v.data()[e] + (1.0 - cfg_.beta2) * ge * ge;
      const double mhat = m.data()[e] / bc1;
      const double vhat = v.data()[e] / bc2;
      double upd = mhat / (std::sqrt(vhat) + cfg_.eps);
      if (cfg_.kind == OptKind::kAdamW)
        upd += cfg_.weight_decay * p.data()[e];
      p.data()[e] -= cfg_.lr * upd;
    }
  }
}

}  // namespace mglp

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
#ifndef MGLP_CHECKPOINT_HPP_
#define MGLP_CHECKPOINT_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>

#include "mglp/model.hpp"
#include "mglp/optimizer.hpp"

namespace mglp {

// Versioned binary container: magic "MGLP", format version, config echo,
// parameter tensors in declaration order (shape header + little-endian f64
// payload), then optionally the optimizer state and the batch counter that
// make a training run resumable bit for bit.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint32_t version = 0;
  std::string config_echo;
  long long batch = 0;
  bool has_optimizer = false;
};

void save_checkpoint(std::ostream& os, Model& model, const Optimizer* opt,
                     long long batch, const std::string& config_echo);
// Overwrites the model's parameters (shapes must match) and, when the stream
// carries it and opt is given, the optimizer state.
CheckpointMeta load_checkpoint(std::istream& is, Model& model, Optimizer* opt);

void save_checkpoint_file(const std::string& path, Model& model,
                          const Optimizer* opt, long long batch,
                          const std::string& config_echo);
CheckpointMeta load_checkpoint_file(const std::string& path, Model& model,
                                    Optimizer* opt);

}  // namespace mglp

#endif  // MGLP_CHECKPOINT_HPP_

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
#ifndef MGLP_TASKS_HPP_
#define MGLP_TASKS_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace mglp {

// Synthetic sequence tasks. Every token is a pure function of
// (seed, split, sample index, position), so a dataset never needs to be
// materialized and any batch can be regenerated from its index alone.

enum class TaskKind { kCopySequence, kTokenClassification, kTinyTranslation };

const char* task_name(TaskKind k);

struct TaskSpec {
  TaskKind kind = TaskKind::kCopySequence;
  int vocab = 16;  // token 0 is reserved as the start marker
  int seq_len = 8;
  int train_size = 256;
  int val_size = 64;
  std::uint64_t seed = 1;
};

struct TokenBatch {
  int batch = 0;
  int seq = 0;
  std::vector<int> src;      // [batch * seq], row-major
  std::vector<int> tgt_in;   // decoder-side input; empty for single-stream tasks
  std::vector<int> tgt_out;  // labels, [batch * seq]
};

inline constexpr int kStartToken = 0;

// Samples (start_index + j) mod split size, for j in [0, batch_size).
// split 0 is train, split 1 is validation; the two splits draw from
// disjoint counter streams.
TokenBatch make_batch(const TaskSpec& spec, int split, long long start_index,
                      int batch_size);

}  // namespace mglp

#endif  // MGLP_TASKS_HPP_

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
#include "mglp/tasks.hpp"

#include "mglp/errors.hpp"
#include "mglp/rng.hpp"

namespace mglp {

const char* task_name(TaskKind k) {
  switch (k) {
    case TaskKind::kCopySequence: return "copy_sequence";
    case TaskKind::kTokenClassification: return "token_classification";
    case TaskKind::kTinyTranslation: return "tiny_translation";
  }
  return "?";
}

namespace {

// data tokens avoid the reserved start marker
int draw_token(const TaskSpec& spec, int split, long long sample, int pos) {
  const std::uint64_t bits =
      rng::derive(spec.seed, rng::kData, static_cast<std::uint64_t>(split),
                  static_cast<std::uint64_t>(sample),
                  static_cast<std::uint64_t>(pos));
  return 1 + static_cast<int>(rng::uniform_index(
                 bits, static_cast<std::uint64_t>(spec.vocab - 1)));
}

}  // namespace

TokenBatch make_batch(const TaskSpec& spec, int split, long long start_index,
                      int batch_size) {
  if (spec.vocab < 2) throw ValidationError("make_batch: vocab must be >= 2");
  if (spec.seq_len < 1) throw ValidationError("make_batch: seq_len must be >= 1");
  if (batch_size < 1) throw ValidationError("make_batch: batch_size must be >= 1");
  const long long split_size = split == 0 ? spec.train_size : spec.val_size;
  if (split_size < 1) throw ValidationError("make_batch: empty split");

  TokenBatch out;
  out.batch = batch_size;
  out.seq = spec.seq_len;
  out.src.resize(static_cast<std::size_t>(batch_size) * spec.seq_len);
  out.tgt_out.resize(out.src.size());
  const bool translate = spec.kind == TaskKind::kTinyTranslation;
  if (translate) out.tgt_in.resize(out.src.size());

  for (int j = 0; j < batch_size; ++j) {
    const long long sample = (start_index + j) % split_size;
    int* src = out.src.data() + static_cast<std::size_t>(j) * spec.seq_len;
    int* tgt = out.tgt_out.data() + static_cast<std::size_t>(j) * spec.seq_len;
    for (int t = 0; t < spec.seq_len; ++t)
      src[t] = draw_token(spec, split, sample, t);

    switch (spec.kind) {
      case TaskKind::kCopySequence:
        for (int t = 0; t < spec.seq_len; ++t) tgt[t] = src[t];
        break;
      case TaskKind::kTokenClassification:
        // label = current token plus its left neighbour, folded into the
        // vocabulary; position 0 has no neighbour
        for (int t = 0; t < spec.seq_len; ++t)
          tgt[t] = (src[t] + (t > 0 ? src[t - 1] : 0)) % spec.vocab;
        break;
      case TaskKind::kTinyTranslation: {
        int* tin = out.tgt_in.data() + static_cast<std::size_t>(j) * spec.seq_len;
        for (int t = 0; t < spec.seq_len; ++t)
          tgt[t] = src[spec.seq_len - 1 - t];
        tin[0] = kStartToken;
        for (int t = 1; t < spec.seq_len; ++t) tin[t] = tgt[t - 1];
        break;
      }
    }
  }
  return out;
}

}  // namespace mglp

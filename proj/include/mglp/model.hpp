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
#ifndef MGLP_MODEL_HPP_
#define MGLP_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mglp/blocks.hpp"
#include "mglp/tasks.hpp"
#include "mglp/tensor.hpp"

namespace mglp {

// Token model around the layer stack: embeddings in, logits out. The stack
// is the depth dimension the solvers parallelize; everything here runs once
// per batch and stays serial.

struct ModelConfig {
  StackConfig stack;
  int vocab = 16;
  int max_seq = 16;
};

struct HeadParams {
  Tensor tok_embed;      // [vocab, d]
  Tensor pos_embed;      // [max_seq, d]
  Tensor tok_embed_out;  // target-side embeddings, two-stream models only
  Tensor pos_embed_out;
  LayerNormParams ln_f;
  LinearParams head;  // d -> vocab
};

struct ModelGrads {
  std::vector<BlockParams> stack;
  HeadParams head;
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  LayerStack& stack() { return stack_; }
  const LayerStack& stack() const { return stack_; }
  HeadParams& head() { return head_; }
  const HeadParams& head() const { return head_; }

  bool two_stream() const {
    return cfg_.stack.kind == ModelKind::kEncoderDecoder;
  }

  // Trainable tensors in declaration order: stack blocks first, then head.
  // This order is the optimizer slot order and the checkpoint layout.
  std::vector<Tensor*> param_tensors();
  std::vector<const Tensor*> grad_tensors(const ModelGrads& g) const;
  ModelGrads zero_grads() const;

  State embed(const TokenBatch& b) const;
  // Read the advancing stream of the final state through the output norm and
  // the vocabulary projection. [batch, seq, vocab].
  Tensor logits(const State& z_final) const;

  struct LossGrad {
    double loss = 0.0;
    Tensor dlogits;
  };
  // Mean token cross-entropy against flat labels.
  static LossGrad cross_entropy(const Tensor& logits,
                                const std::vector<int>& labels);

  // Backs dlogits through head and output norm into a terminal sensitivity;
  // accumulates head-side gradients when given.
  State head_backward(const State& z_final, const Tensor& dlogits,
                      ModelGrads* grads) const;
  // Scatters the input sensitivity into the embedding tables.
  void embed_backward(const TokenBatch& b, const State& lambda0,
                      ModelGrads* grads) const;

  // Fraction of positions whose argmax logit hits the label. Exact map: the
  // caller is expected to have cleared dropout.
  double accuracy(const Tensor& logits, const std::vector<int>& labels) const;

 private:
  ModelConfig cfg_;
  LayerStack stack_;
  HeadParams head_;
};

}  // namespace mglp

#endif  // MGLP_MODEL_HPP_

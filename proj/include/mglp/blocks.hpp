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
#ifndef MGLP_BLOCKS_HPP_
#define MGLP_BLOCKS_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "mglp/tensor.hpp"

namespace mglp {

// ---- parameter bundles ------------------------------------------------------

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct AttentionParams {
  LinearParams q, k, v, o;
};

struct MlpParams {
  LinearParams in;   // d -> ffn
  LinearParams out;  // ffn -> d
};

// Self-attention + MLP residual block (also covers the causal single-stream
// case). Sublayers are pre-normalized: attn(ln1(x)), mlp(ln2(.)).
struct EncoderBlockParams {
  LayerNormParams ln1;
  AttentionParams attn;
  LayerNormParams ln2;
  MlpParams mlp;
};

// Adds a cross-attention sublayer reading the frozen encoder stream.
struct DecoderBlockParams {
  LayerNormParams ln1;
  AttentionParams self_attn;
  LayerNormParams ln3;
  AttentionParams cross_attn;
  LayerNormParams ln2;
  MlpParams mlp;
};

using BlockParams = std::variant<EncoderBlockParams, DecoderBlockParams>;

// ---- time-point state -------------------------------------------------------

// One time point of the coupled system: the encoder stream x and, for
// encoder-decoder models, the decoder stream y. Unused streams stay empty
// (size 0), and every vector-space op below treats them uniformly.
struct State {
  Tensor x;  // [batch, s_x, d]
  Tensor y;  // [batch, s_y, d]
};

State zeros_like(const State& s);
State add(const State& a, const State& b);
State sub(const State& a, const State& b);
State scale(const State& a, double c);
void axpy(State& a, double c, const State& b);
double norm_sq(const State& a);
double dot(const State& a, const State& b);
bool bitwise_equal(const State& a, const State& b);

// ---- dropout ----------------------------------------------------------------

// Inverted-dropout masks for one block, one per sublayer output. Empty tensor
// means no dropout at that site. Masks stay fixed until explicitly refreshed,
// so repeated evaluations of a layer inside one optimizer step agree bit for
// bit.
struct BlockMasks {
  Tensor phi1;   // self-attention output
  Tensor phi2;   // mlp output
  Tensor phi3;   // cross-attention output (decoder blocks)
};

// ---- stack ------------------------------------------------------------------

enum class ModelKind { kEncoder, kDecoderOnly, kEncoderDecoder };

struct StackConfig {
  ModelKind kind = ModelKind::kEncoder;
  int d = 32;
  int heads = 2;
  int ffn = 64;
  int n_enc = 8;  // encoder blocks (or all blocks for single-stream kinds)
  int n_dec = 0;  // decoder blocks (encoder-decoder only)
  int buffer_open = 0;
  int buffer_close = 0;
  double ln_eps = 1e-5;
  double base_h = 1.0;  // step size when the stack has no buffer layers
  double dropout = 0.0;
  double init_std = 0.02;
  bool depth_scaled_init = false;  // multiply mlp/value/output init by sqrt(log 2L)
};

// The continuous-depth layer stack: owns block parameters, the per-layer step
// sizes, and frozen dropout masks. Layer index n runs over all blocks
// (buffers included); the interior window [interior_begin, interior_end) is
// what the multigrid solvers operate on.
class LayerStack {
 public:
  LayerStack(StackConfig cfg, std::uint64_t seed);

  const StackConfig& config() const { return cfg_; }
  int total_layers() const { return static_cast<int>(params_.size()); }
  int encoder_layers() const { return n_split_; }
  int interior_begin() const { return cfg_.buffer_open; }
  int interior_end() const { return total_layers() - cfg_.buffer_close; }
  int interior_layers() const { return interior_end() - interior_begin(); }
  double step_size(int layer) const { return h_[layer]; }
  double interior_h() const;
  bool is_buffer(int layer) const {
    return layer < cfg_.buffer_open || layer >= interior_end();
  }

  std::vector<BlockParams>& params() { return params_; }
  const std::vector<BlockParams>& params() const { return params_; }

  // Zero-valued structure-matching gradient container.
  std::vector<BlockParams> zero_grads() const;

  // F(t_n, z): the residual branch of layer n. The encoder stream advances
  // during the encoder phase, the decoder stream afterwards; the other
  // stream's component is exactly zero.
  State residual(int layer, const State& z) const;

  // z + dt * F(t_n, z).
  State step(int layer, double dt, const State& z) const;

  // (dF/dz)^T lambda evaluated at z, optionally accumulating
  // grads[layer] += gscale * (dF/dtheta_n)^T lambda.
  State residual_vjp(int layer, const State& z, const State& lambda,
                     std::vector<BlockParams>* grads, double gscale) const;

  // lambda + dt * (dF/dz)^T lambda: one reverse step of the sensitivity
  // recursion at frozen state z.
  State adjoint_step(int layer, double dt, const State& z, const State& lambda,
                     std::vector<BlockParams>* grads, double gscale) const;

  // Regenerates dropout masks for a new optimizer step. No-op when
  // config().dropout == 0. Values depend only on (seed, batch_index, layer,
  // site, element).
  void refresh_dropout(std::uint64_t seed, std::uint64_t batch_index, int batch,
                       int s_x, int s_y);
  // back to the deterministic map, e.g. for evaluation passes
  void clear_dropout() { masks_.clear(); }
  const std::vector<BlockMasks>& masks() const { return masks_; }

 private:
  StackConfig cfg_;
  int n_split_;  // layers before this index advance the encoder stream
  std::vector<BlockParams> params_;
  std::vector<double> h_;
  std::vector<BlockMasks> masks_;
};

// Parameter traversal in declaration order, shared by the optimizer, the
// checkpoint writer, and the weight-change tracker.
using ParamVisitor =
    std::function<void(int layer, const std::string& component, Tensor& t)>;
void visit_params(std::vector<BlockParams>& blocks, const ParamVisitor& fn);
using ConstParamVisitor = std::function<void(int layer,
                                             const std::string& component,
                                             const Tensor& t)>;
void visit_params(const std::vector<BlockParams>& blocks,
                  const ConstParamVisitor& fn);

// Whole-depth serial propagation: returns states at all total_layers()+1 time
// points. This is the reference the multigrid path must reproduce.
std::vector<State> serial_forward(const LayerStack& stack, const State& z0);

// Serial sweep of the sensitivity recursion from terminal condition
// lambda_N, consuming the forward trajectory. Returns lambda at every time
// point and accumulates parameter gradients (scaled by each layer's step
// size) into grads if given.
std::vector<State> serial_adjoint(const LayerStack& stack,
                                  const std::vector<State>& traj,
                                  const State& lambda_terminal,
                                  std::vector<BlockParams>* grads);

// ---- single-sample compositions (exposed for tests) -------------------------

// Multi-head attention on one sample. x_q [s_q, d], x_kv [s_kv, d].
Tensor attention(const AttentionParams& p, int heads, bool causal,
                 const Tensor& x_q, const Tensor& x_kv);
struct AttentionVjp {
  Tensor dx_q;
  Tensor dx_kv;
};
AttentionVjp vjp_attention(const AttentionParams& p, int heads, bool causal,
                           const Tensor& x_q, const Tensor& x_kv,
                           const Tensor& upstream, AttentionParams* grads,
                           double gscale);

}  // namespace mglp

#endif  // MGLP_BLOCKS_HPP_

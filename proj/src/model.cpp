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
#include "mglp/model.hpp"

#include <cmath>
#include <cstring>

#include "mglp/errors.hpp"
#include "mglp/rng.hpp"

namespace mglp {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// head tensors key their init off a pseudo-layer no stack can reach
constexpr std::uint64_t kHeadSlot = 1000000007ULL;

void init_table(Tensor& t, double stddev, std::uint64_t seed,
                const std::string& name) {
  const std::uint64_t site = kHeadSlot * 1000003u + fnv1a(name);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = rng::truncated_gaussian(stddev, seed, rng::kInit, site, i);
}

void check_tokens(const std::vector<int>& toks, int vocab, const char* what) {
  for (int tk : toks)
    if (tk < 0 || tk >= vocab)
      throw ValidationError(std::string(what) + ": token outside vocabulary");
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed)
    : cfg_(cfg), stack_(cfg.stack, seed) {
  if (cfg_.vocab < 2) throw ValidationError("Model: vocab must be >= 2");
  if (cfg_.max_seq < 1) throw ValidationError("Model: max_seq must be >= 1");
  const std::size_t d = static_cast<std::size_t>(cfg_.stack.d);
  const std::size_t v = static_cast<std::size_t>(cfg_.vocab);
  const std::size_t s = static_cast<std::size_t>(cfg_.max_seq);
  const double std = cfg_.stack.init_std;

  head_.tok_embed = Tensor({v, d});
  init_table(head_.tok_embed, std, seed, "head.tok_embed");
  head_.pos_embed = Tensor({s, d});
  init_table(head_.pos_embed, std, seed, "head.pos_embed");
  if (two_stream()) {
    head_.tok_embed_out = Tensor({v, d});
    init_table(head_.tok_embed_out, std, seed, "head.tok_embed_out");
    head_.pos_embed_out = Tensor({s, d});
    init_table(head_.pos_embed_out, std, seed, "head.pos_embed_out");
  }
  head_.ln_f.gain = Tensor({d});
  fill(head_.ln_f.gain, 1.0);
  head_.ln_f.bias = Tensor({d});
  head_.head.w = Tensor({v, d});
  init_table(head_.head.w, std, seed, "head.out");
  head_.head.b = Tensor({v});
}

std::vector<Tensor*> Model::param_tensors() {
  std::vector<Tensor*> out;
  visit_params(stack_.params(), [&](int, const std::string&, Tensor& t) {
    out.push_back(&t);
  });
  out.push_back(&head_.tok_embed);
  out.push_back(&head_.pos_embed);
  if (two_stream()) {
    out.push_back(&head_.tok_embed_out);
    out.push_back(&head_.pos_embed_out);
  }
  out.push_back(&head_.ln_f.gain);
  out.push_back(&head_.ln_f.bias);
  out.push_back(&head_.head.w);
  out.push_back(&head_.head.b);
  return out;
}

std::vector<const Tensor*> Model::grad_tensors(const ModelGrads& g) const {
  std::vector<const Tensor*> out;
  visit_params(g.stack, [&](int, const std::string&, const Tensor& t) {
    out.push_back(&t);
  });
  out.push_back(&g.head.tok_embed);
  out.push_back(&g.head.pos_embed);
  if (two_stream()) {
    out.push_back(&g.head.tok_embed_out);
    out.push_back(&g.head.pos_embed_out);
  }
  out.push_back(&g.head.ln_f.gain);
  out.push_back(&g.head.ln_f.bias);
  out.push_back(&g.head.head.w);
  out.push_back(&g.head.head.b);
  return out;
}

ModelGrads Model::zero_grads() const {
  ModelGrads g;
  g.stack = stack_.zero_grads();
  g.head.tok_embed = Tensor::zeros_like(head_.tok_embed);
  g.head.pos_embed = Tensor::zeros_like(head_.pos_embed);
  if (two_stream()) {
    g.head.tok_embed_out = Tensor::zeros_like(head_.tok_embed_out);
    g.head.pos_embed_out = Tensor::zeros_like(head_.pos_embed_out);
  }
  g.head.ln_f.gain = Tensor::zeros_like(head_.ln_f.gain);
  g.head.ln_f.bias = Tensor::zeros_like(head_.ln_f.bias);
  g.head.head.w = Tensor::zeros_like(head_.head.w);
  g.head.head.b = Tensor::zeros_like(head_.head.b);
  return g;
}

State Model::embed(const TokenBatch& b) const {
  if (b.seq > cfg_.max_seq)
    throw ValidationError("embed: sequence longer than max_seq");
  check_tokens(b.src, cfg_.vocab, "embed");
  const std::size_t d = static_cast<std::size_t>(cfg_.stack.d);
  const std::size_t B = static_cast<std::size_t>(b.batch);
  const std::size_t S = static_cast<std::size_t>(b.seq);

  auto table_lookup = [&](const std::vector<int>& toks, const Tensor& tok,
                          const Tensor& pos) {
    Tensor out({B, S, d});
    for (std::size_t j = 0; j < B; ++j)
      for (std::size_t t = 0; t < S; ++t) {
        const int id = toks[j * S + t];
        double* row = out.data() + (j * S + t) * d;
        const double* te = tok.data() + static_cast<std::size_t>(id) * d;
        const double* pe = pos.data() + t * d;
        for (std::size_t e = 0; e < d; ++e) row[e] = te[e] + pe[e];
      }
    return out;
  };

  State z;
  z.x = table_lookup(b.src, head_.tok_embed, head_.pos_embed);
  if (two_stream()) {
    if (b.tgt_in.empty())
      throw ValidationError("embed: two-stream model needs decoder input tokens");
    check_tokens(b.tgt_in, cfg_.vocab, "embed");
    z.y = table_lookup(b.tgt_in, head_.tok_embed_out, head_.pos_embed_out);
  }
  return z;
}

Tensor Model::logits(const State& z_final) const {
  const Tensor& stream = two_stream() ? z_final.y : z_final.x;
  const std::size_t B = stream.dim(0);
  const std::size_t S = stream.dim(1);
  const std::size_t V = static_cast<std::size_t>(cfg_.vocab);
  Tensor out({B, S, V});
  for (std::size_t j = 0; j < B; ++j) {
    const Tensor rows = slice0(stream, j);
    const Tensor n = layer_norm(rows, head_.ln_f.gain, head_.ln_f.bias,
                                cfg_.stack.ln_eps);
    const Tensor lg = linear(n, head_.head);
    std::memcpy(out.data() + j * S * V, lg.data(), S * V * sizeof(double));
  }
  return out;
}

Model::LossGrad Model::cross_entropy(const Tensor& logits,
                                     const std::vector<int>& labels) {
  const std::size_t rows = logits.dim(0) * logits.dim(1);
  const std::size_t V = logits.dim(2);
  if (labels.size() != rows)
    throw ValidationError("cross_entropy: label count does not match logits");

  LossGrad out;
  out.dlogits = Tensor::zeros_like(logits);
  const double inv_n = 1.0 / static_cast<double>(rows);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = logits.data() + r * V;
    double* drow = out.dlogits.data() + r * V;
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= V)
      throw ValidationError("cross_entropy: label outside vocabulary");
    double mx = row[0];
    for (std::size_t c = 1; c < V; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < V; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    loss += lse - row[label];
    for (std::size_t c = 0; c < V; ++c)
      drow[c] = std::exp(row[c] - mx) / z * inv_n;
    drow[label] -= inv_n;
  }
  out.loss = loss * inv_n;
  return out;
}

State Model::head_backward(const State& z_final, const Tensor& dlogits,
                           ModelGrads* grads) const {
  const Tensor& stream = two_stream() ? z_final.y : z_final.x;
  const std::size_t B = stream.dim(0);
  const std::size_t S = stream.dim(1);
  const std::size_t d = stream.dim(2);

  Tensor dstream({B, S, d});
  for (std::size_t j = 0; j < B; ++j) {
    const Tensor rows = slice0(stream, j);
    const Tensor n = layer_norm(rows, head_.ln_f.gain, head_.ln_f.bias,
                                cfg_.stack.ln_eps);
    const Tensor up = slice0(dlogits, j);
    const LinearVjp lv = vjp_linear(n, head_.head, up);
    const LayerNormVjp ln =
        vjp_layer_norm(rows, head_.ln_f.gain, cfg_.stack.ln_eps, lv.dx);
    if (grads) {
      add_inplace(grads->head.head.w, lv.dw);
      add_inplace(grads->head.head.b, lv.db);
      add_inplace(grads->head.ln_f.gain, ln.dgain);
      add_inplace(grads->head.ln_f.bias, ln.dbias);
    }
    std::memcpy(dstream.data() + j * S * d, ln.dx.data(),
                S * d * sizeof(double));
  }

  State lam;
  if (two_stream()) {
    lam.y = std::move(dstream);
    lam.x = Tensor::zeros_like(z_final.x);
  } else {
    lam.x = std::move(dstream);
    if (z_final.y.size() > 0) lam.y = Tensor::zeros_like(z_final.y);
  }
  return lam;
}

void Model::embed_backward(const TokenBatch& b, const State& lambda0,
                           ModelGrads* grads) const {
  if (!grads) return;
  const std::size_t d = static_cast<std::size_t>(cfg_.stack.d);
  const std::size_t B = static_cast<std::size_t>(b.batch);
  const std::size_t S = static_cast<std::size_t>(b.seq);

  auto scatter = [&](const std::vector<int>& toks, const Tensor& dstream,
                     Tensor& dtok, Tensor& dpos) {
    for (std::size_t j = 0; j < B; ++j)
      for (std::size_t t = 0; t < S; ++t) {
        const double* row = dstream.data() + (j * S + t) * d;
        double* te = dtok.data() + static_cast<std::size_t>(toks[j * S + t]) * d;
        double* pe = dpos.data() + t * d;
        for (std::size_t e = 0; e < d; ++e) {
          te[e] += row[e];
          pe[e] += row[e];
        }
      }
  };

  scatter(b.src, lambda0.x, grads->head.tok_embed, grads->head.pos_embed);
  if (two_stream())
    scatter(b.tgt_in, lambda0.y, grads->head.tok_embed_out,
            grads->head.pos_embed_out);
}

double Model::accuracy(const Tensor& logits,
                       const std::vector<int>& labels) const {
  const std::size_t rows = logits.dim(0) * logits.dim(1);
  const std::size_t V = logits.dim(2);
  if (labels.size() != rows)
    throw ValidationError("accuracy: label count does not match logits");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = logits.data() + r * V;
    std::size_t best = 0;
    for (std::size_t c = 1; c < V; ++c)
      if (row[c] > row[best]) best = c;
    if (static_cast<int>(best) == labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows);
}

}  // namespace mglp

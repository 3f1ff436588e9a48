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
#include "mglp/blocks.hpp"

#include <cmath>

#include "mglp/rng.hpp"

namespace mglp {

// ---- state ops --------------------------------------------------------------

State zeros_like(const State& s) {
  State z;
  if (s.x.size()) z.x = Tensor::zeros_like(s.x);
  if (s.y.size()) z.y = Tensor::zeros_like(s.y);
  return z;
}

State add(const State& a, const State& b) {
  State c;
  if (a.x.size()) c.x = add(a.x, b.x);
  if (a.y.size()) c.y = add(a.y, b.y);
  return c;
}

State sub(const State& a, const State& b) {
  State c;
  if (a.x.size()) c.x = sub(a.x, b.x);
  if (a.y.size()) c.y = sub(a.y, b.y);
  return c;
}

State scale(const State& a, double c) {
  State s;
  if (a.x.size()) s.x = scale(a.x, c);
  if (a.y.size()) s.y = scale(a.y, c);
  return s;
}

void axpy(State& a, double c, const State& b) {
  if (a.x.size()) axpy(a.x, c, b.x);
  if (a.y.size()) axpy(a.y, c, b.y);
}

double norm_sq(const State& a) {
  double s = 0.0;
  if (a.x.size()) s += norm_sq(a.x);
  if (a.y.size()) s += norm_sq(a.y);
  return s;
}

double dot(const State& a, const State& b) {
  double s = 0.0;
  if (a.x.size()) s += dot(a.x, b.x);
  if (a.y.size()) s += dot(a.y, b.y);
  return s;
}

bool bitwise_equal(const State& a, const State& b) {
  if (a.x.size() != b.x.size() || a.y.size() != b.y.size()) return false;
  for (std::size_t i = 0; i < a.x.size(); ++i)
    if (a.x.data()[i] != b.x.data()[i]) return false;
  for (std::size_t i = 0; i < a.y.size(); ++i)
    if (a.y.data()[i] != b.y.data()[i]) return false;
  return true;
}

// ---- small helpers ----------------------------------------------------------

namespace {

constexpr double kMaskValue = -1e30;  // additive pre-softmax mask; underflows
                                      // to an exact zero probability

Tensor col_block(const Tensor& t, std::size_t c0, std::size_t cols) {
  Tensor out({t.dim(0), cols});
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = t(i, c0 + j);
  return out;
}

void set_col_block(Tensor& t, std::size_t c0, const Tensor& blk) {
  for (std::size_t i = 0; i < blk.dim(0); ++i)
    for (std::size_t j = 0; j < blk.dim(1); ++j) t(i, c0 + j) = blk(i, j);
}

Tensor ln_forward(const Tensor& x, const LayerNormParams& p, double eps) {
  return layer_norm(x, p.gain, p.bias, eps);
}

Tensor ln_backward(const Tensor& x, const LayerNormParams& p, double eps,
                   const Tensor& up, LayerNormParams* g, double gscale) {
  LayerNormVjp v = vjp_layer_norm(x, p.gain, eps, up);
  if (g) {
    axpy(g->gain, gscale, v.dgain);
    axpy(g->bias, gscale, v.dbias);
  }
  return v.dx;
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
  return linear(gelu(linear(x, p.in)), p.out);
}

Tensor mlp_backward(const Tensor& x, const MlpParams& p, const Tensor& up,
                    MlpParams* g, double gscale) {
  Tensor a = linear(x, p.in);
  Tensor ga = gelu(a);
  LinearVjp l2 = vjp_linear(ga, p.out, up);
  Tensor da = vjp_gelu(a, l2.dx);
  LinearVjp l1 = vjp_linear(x, p.in, da);
  if (g) {
    axpy(g->out.w, gscale, l2.dw);
    axpy(g->out.b, gscale, l2.db);
    axpy(g->in.w, gscale, l1.dw);
    axpy(g->in.b, gscale, l1.db);
  }
  return l1.dx;
}

Tensor apply_mask(const Tensor& t, const Tensor& mask) {
  return mask.size() ? hadamard(t, mask) : t;
}

}  // namespace

// ---- attention --------------------------------------------------------------

Tensor attention(const AttentionParams& p, int heads, bool causal,
                 const Tensor& x_q, const Tensor& x_kv) {
  const std::size_t d = x_q.dim(1);
  if (d % heads != 0)
    throw ValidationError("attention: head count must divide width");
  if (causal && x_q.dim(0) != x_kv.dim(0))
    throw ValidationError("attention: causal masking needs square scores");
  const std::size_t dh = d / heads;
  const double inv_s = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = linear(x_q, p.q);
  Tensor k = linear(x_kv, p.k);
  Tensor v = linear(x_kv, p.v);
  Tensor ctx({x_q.dim(0), d});
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    Tensor qh = col_block(q, c0, dh);
    Tensor kh = col_block(k, c0, dh);
    Tensor vh = col_block(v, c0, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_s);
    if (causal) {
      for (std::size_t i = 0; i < scores.dim(0); ++i)
        for (std::size_t j = i + 1; j < scores.dim(1); ++j)
          scores(i, j) += kMaskValue;
    }
    Tensor probs = softmax_rows(scores);
    set_col_block(ctx, c0, matmul(probs, vh));
  }
  return linear(ctx, p.o);
}

AttentionVjp vjp_attention(const AttentionParams& p, int heads, bool causal,
                           const Tensor& x_q, const Tensor& x_kv,
                           const Tensor& upstream, AttentionParams* grads,
                           double gscale) {
  const std::size_t d = x_q.dim(1);
  const std::size_t dh = d / heads;
  const double inv_s = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = linear(x_q, p.q);
  Tensor k = linear(x_kv, p.k);
  Tensor v = linear(x_kv, p.v);
  Tensor ctx({x_q.dim(0), d});
  std::vector<Tensor> probs_h(heads);
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    Tensor qh = col_block(q, c0, dh);
    Tensor kh = col_block(k, c0, dh);
    Tensor vh = col_block(v, c0, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_s);
    if (causal) {
      for (std::size_t i = 0; i < scores.dim(0); ++i)
        for (std::size_t j = i + 1; j < scores.dim(1); ++j)
          scores(i, j) += kMaskValue;
    }
    probs_h[h] = softmax_rows(scores);
    set_col_block(ctx, c0, matmul(probs_h[h], vh));
  }
  LinearVjp lo = vjp_linear(ctx, p.o, upstream);
  Tensor dq({x_q.dim(0), d});
  Tensor dk({x_kv.dim(0), d});
  Tensor dv({x_kv.dim(0), d});
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    Tensor qh = col_block(q, c0, dh);
    Tensor kh = col_block(k, c0, dh);
    Tensor vh = col_block(v, c0, dh);
    Tensor dctx_h = col_block(lo.dx, c0, dh);
    Tensor dprobs = matmul(dctx_h, transpose(vh));
    Tensor dvh = matmul(transpose(probs_h[h]), dctx_h);
    // masked entries carry zero probability, so their score gradient vanishes
    // and nothing leaks across the causal boundary
    Tensor dscores = vjp_softmax_rows(probs_h[h], dprobs);
    Tensor dqh = scale(matmul(dscores, kh), inv_s);
    Tensor dkh = scale(matmul(transpose(dscores), qh), inv_s);
    set_col_block(dq, c0, dqh);
    set_col_block(dk, c0, dkh);
    set_col_block(dv, c0, dvh);
  }
  LinearVjp lq = vjp_linear(x_q, p.q, dq);
  LinearVjp lk = vjp_linear(x_kv, p.k, dk);
  LinearVjp lv = vjp_linear(x_kv, p.v, dv);
  if (grads) {
    axpy(grads->o.w, gscale, lo.dw);
    axpy(grads->o.b, gscale, lo.db);
    axpy(grads->q.w, gscale, lq.dw);
    axpy(grads->q.b, gscale, lq.db);
    axpy(grads->k.w, gscale, lk.dw);
    axpy(grads->k.b, gscale, lk.db);
    axpy(grads->v.w, gscale, lv.dw);
    axpy(grads->v.b, gscale, lv.db);
  }
  AttentionVjp out;
  out.dx_q = lq.dx;
  out.dx_kv = add(lk.dx, lv.dx);
  return out;
}

// ---- block residuals (single sample) ----------------------------------------

namespace {

struct SampleMasks {
  Tensor phi1, phi2, phi3;  // possibly empty
};

Tensor encoder_residual_1(const EncoderBlockParams& p, int heads, bool causal,
                          double eps, const Tensor& x, const SampleMasks& m) {
  Tensor n1 = ln_forward(x, p.ln1, eps);
  Tensor a1 = apply_mask(attention(p.attn, heads, causal, n1, n1), m.phi1);
  Tensor u = add(x, a1);
  Tensor n2 = ln_forward(u, p.ln2, eps);
  Tensor mo = apply_mask(mlp_forward(n2, p.mlp), m.phi2);
  return add(a1, mo);
}

Tensor encoder_residual_vjp_1(const EncoderBlockParams& p, int heads,
                              bool causal, double eps, const Tensor& x,
                              const SampleMasks& m, const Tensor& up,
                              EncoderBlockParams* g, double gscale) {
  // recompute forward intermediates, then walk the composition backwards
  Tensor n1 = ln_forward(x, p.ln1, eps);
  Tensor a1 = apply_mask(attention(p.attn, heads, causal, n1, n1), m.phi1);
  Tensor u = add(x, a1);
  Tensor n2 = ln_forward(u, p.ln2, eps);

  Tensor dm_pre = m.phi2.size() ? hadamard(up, m.phi2) : up;
  Tensor dn2 = mlp_backward(n2, p.mlp, dm_pre, g ? &g->mlp : nullptr, gscale);
  Tensor du = ln_backward(u, p.ln2, eps, dn2, g ? &g->ln2 : nullptr, gscale);
  Tensor dx = du;
  Tensor da1 = add(up, du);
  Tensor da1_pre = m.phi1.size() ? hadamard(da1, m.phi1) : da1;
  AttentionVjp av = vjp_attention(p.attn, heads, causal, n1, n1, da1_pre,
                                  g ? &g->attn : nullptr, gscale);
  Tensor dn1 = add(av.dx_q, av.dx_kv);
  add_inplace(dx, ln_backward(x, p.ln1, eps, dn1, g ? &g->ln1 : nullptr, gscale));
  return dx;
}

Tensor decoder_residual_1(const DecoderBlockParams& p, int heads, double eps,
                          const Tensor& y, const Tensor& xe,
                          const SampleMasks& m) {
  Tensor n1 = ln_forward(y, p.ln1, eps);
  Tensor a1 = apply_mask(attention(p.self_attn, heads, true, n1, n1), m.phi1);
  Tensor u3 = add(y, a1);
  Tensor n3 = ln_forward(u3, p.ln3, eps);
  Tensor c = apply_mask(attention(p.cross_attn, heads, false, n3, xe), m.phi3);
  Tensor ybar = add(a1, c);
  Tensor u2 = add(y, ybar);
  Tensor n2 = ln_forward(u2, p.ln2, eps);
  Tensor mo = apply_mask(mlp_forward(n2, p.mlp), m.phi2);
  return add(ybar, mo);
}

struct DecoderVjp {
  Tensor dy;
  Tensor dxe;
};

DecoderVjp decoder_residual_vjp_1(const DecoderBlockParams& p, int heads,
                                  double eps, const Tensor& y, const Tensor& xe,
                                  const SampleMasks& m, const Tensor& up,
                                  DecoderBlockParams* g, double gscale) {
  Tensor n1 = ln_forward(y, p.ln1, eps);
  Tensor a1 = apply_mask(attention(p.self_attn, heads, true, n1, n1), m.phi1);
  Tensor u3 = add(y, a1);
  Tensor n3 = ln_forward(u3, p.ln3, eps);
  Tensor c = apply_mask(attention(p.cross_attn, heads, false, n3, xe), m.phi3);
  Tensor ybar = add(a1, c);
  Tensor u2 = add(y, ybar);
  Tensor n2 = ln_forward(u2, p.ln2, eps);

  Tensor dm_pre = m.phi2.size() ? hadamard(up, m.phi2) : up;
  Tensor dn2 = mlp_backward(n2, p.mlp, dm_pre, g ? &g->mlp : nullptr, gscale);
  Tensor du2 = ln_backward(u2, p.ln2, eps, dn2, g ? &g->ln2 : nullptr, gscale);
  Tensor dy = du2;
  Tensor dybar = add(up, du2);
  Tensor da1 = dybar;
  Tensor dc_pre = m.phi3.size() ? hadamard(dybar, m.phi3) : dybar;
  AttentionVjp cv = vjp_attention(p.cross_attn, heads, false, n3, xe, dc_pre,
                                  g ? &g->cross_attn : nullptr, gscale);
  Tensor du3 = ln_backward(u3, p.ln3, eps, cv.dx_q, g ? &g->ln3 : nullptr, gscale);
  add_inplace(dy, du3);
  add_inplace(da1, du3);
  Tensor da1_pre = m.phi1.size() ? hadamard(da1, m.phi1) : da1;
  AttentionVjp sv = vjp_attention(p.self_attn, heads, true, n1, n1, da1_pre,
                                  g ? &g->self_attn : nullptr, gscale);
  Tensor dn1 = add(sv.dx_q, sv.dx_kv);
  add_inplace(dy, ln_backward(y, p.ln1, eps, dn1, g ? &g->ln1 : nullptr, gscale));
  DecoderVjp out;
  out.dy = dy;
  out.dxe = cv.dx_kv;
  return out;
}

}  // namespace

// ---- LayerStack -------------------------------------------------------------

namespace {

LinearParams make_linear(std::size_t out, std::size_t in) {
  return LinearParams{Tensor({out, in}), Tensor({out})};
}

EncoderBlockParams make_encoder_block(int d, int ffn) {
  EncoderBlockParams p;
  p.ln1 = {Tensor({(std::size_t)d}), Tensor({(std::size_t)d})};
  p.attn = {make_linear(d, d), make_linear(d, d), make_linear(d, d),
            make_linear(d, d)};
  p.ln2 = {Tensor({(std::size_t)d}), Tensor({(std::size_t)d})};
  p.mlp = {make_linear(ffn, d), make_linear(d, ffn)};
  return p;
}

DecoderBlockParams make_decoder_block(int d, int ffn) {
  DecoderBlockParams p;
  p.ln1 = {Tensor({(std::size_t)d}), Tensor({(std::size_t)d})};
  p.self_attn = {make_linear(d, d), make_linear(d, d), make_linear(d, d),
                 make_linear(d, d)};
  p.ln3 = {Tensor({(std::size_t)d}), Tensor({(std::size_t)d})};
  p.cross_attn = {make_linear(d, d), make_linear(d, d), make_linear(d, d),
                  make_linear(d, d)};
  p.ln2 = {Tensor({(std::size_t)d}), Tensor({(std::size_t)d})};
  p.mlp = {make_linear(ffn, d), make_linear(d, ffn)};
  return p;
}

bool depth_scaled_component(const std::string& c) {
  return c == "attn.v.w" || c == "attn.o.w" || c == "self.v.w" ||
         c == "self.o.w" || c == "cross.v.w" || c == "cross.o.w" ||
         c == "mlp.in.w" || c == "mlp.out.w";
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

LayerStack::LayerStack(StackConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.d <= 0 || cfg_.heads <= 0 || cfg_.ffn <= 0)
    throw ValidationError("LayerStack: width, heads, ffn must be positive");
  if (cfg_.d % cfg_.heads != 0)
    throw ValidationError("LayerStack: head count must divide width");
  int total = 0;
  switch (cfg_.kind) {
    case ModelKind::kEncoder:
      if (cfg_.n_enc <= 0) throw ValidationError("LayerStack: n_enc must be positive");
      total = cfg_.n_enc;
      n_split_ = total;
      for (int i = 0; i < total; ++i)
        params_.emplace_back(make_encoder_block(cfg_.d, cfg_.ffn));
      break;
    case ModelKind::kDecoderOnly:
      if (cfg_.n_dec <= 0) throw ValidationError("LayerStack: n_dec must be positive");
      total = cfg_.n_dec;
      n_split_ = total;  // single stream: x advances at every layer
      for (int i = 0; i < total; ++i)
        params_.emplace_back(make_encoder_block(cfg_.d, cfg_.ffn));
      break;
    case ModelKind::kEncoderDecoder:
      if (cfg_.n_enc <= 0 || cfg_.n_dec <= 0)
        throw ValidationError("LayerStack: encoder-decoder needs both n_enc and n_dec");
      total = cfg_.n_enc + cfg_.n_dec;
      n_split_ = cfg_.n_enc;
      for (int i = 0; i < cfg_.n_enc; ++i)
        params_.emplace_back(make_encoder_block(cfg_.d, cfg_.ffn));
      for (int i = 0; i < cfg_.n_dec; ++i)
        params_.emplace_back(make_decoder_block(cfg_.d, cfg_.ffn));
      break;
  }
  if (cfg_.buffer_open < 0 || cfg_.buffer_close < 0 ||
      cfg_.buffer_open + cfg_.buffer_close >= total)
    throw ValidationError("LayerStack: buffer layers must leave a non-empty interior");

  // Buffered stacks integrate the interior over unit time; unbuffered stacks
  // use the configured step everywhere.
  h_.assign(total, cfg_.base_h);
  if (cfg_.buffer_open + cfg_.buffer_close > 0) {
    const int interior = total - cfg_.buffer_open - cfg_.buffer_close;
    for (int i = 0; i < total; ++i) {
      bool buffer = i < cfg_.buffer_open || i >= total - cfg_.buffer_close;
      h_[i] = buffer ? 1.0 : 1.0 / static_cast<double>(interior);
    }
  }

  const double depth_factor =
      cfg_.depth_scaled_init
          ? std::sqrt(std::log(2.0 * static_cast<double>(total)))
          : 1.0;
  visit_params(params_, [&](int layer, const std::string& comp, Tensor& t) {
    const std::uint64_t site = fnv1a(comp);
    if (comp.size() >= 4 && comp.compare(comp.size() - 4, 4, "gain") == 0) {
      fill(t, 1.0);
    } else if (comp.back() == 'w') {
      double stddev = cfg_.init_std;
      if (depth_scaled_component(comp)) stddev *= depth_factor;
      for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = rng::truncated_gaussian(stddev, seed, rng::kInit,
                                              (std::uint64_t)layer * 1000003u + site, i);
    } else {
      fill(t, 0.0);  // biases and ln offsets
    }
  });
}

double LayerStack::interior_h() const { return h_[interior_begin()]; }

std::vector<BlockParams> LayerStack::zero_grads() const {
  std::vector<BlockParams> g;
  g.reserve(params_.size());
  for (const BlockParams& b : params_) {
    if (std::holds_alternative<EncoderBlockParams>(b))
      g.emplace_back(make_encoder_block(cfg_.d, cfg_.ffn));
    else
      g.emplace_back(make_decoder_block(cfg_.d, cfg_.ffn));
  }
  return g;
}

State LayerStack::residual(int layer, const State& z) const {
  const SampleMasks no_masks;
  const bool have_masks = !masks_.empty();
  const int b = static_cast<int>((z.x.size() ? z.x : z.y).dim(0));
  State f;
  if (layer < n_split_) {
    // encoder phase: x advances, y (if present) receives exactly zero
    const EncoderBlockParams& p = std::get<EncoderBlockParams>(params_[layer]);
    const bool causal = cfg_.kind == ModelKind::kDecoderOnly;
    f.x = Tensor::zeros_like(z.x);
    for (int i = 0; i < b; ++i) {
      SampleMasks m = no_masks;
      if (have_masks) {
        const BlockMasks& bm = masks_[layer];
        if (bm.phi1.size()) m.phi1 = slice0(bm.phi1, i);
        if (bm.phi2.size()) m.phi2 = slice0(bm.phi2, i);
      }
      set_slice0(f.x, i,
                 encoder_residual_1(p, cfg_.heads, causal, cfg_.ln_eps,
                                    slice0(z.x, i), m));
    }
    if (z.y.size()) f.y = Tensor::zeros_like(z.y);
  } else {
    // decoder phase: y advances against the frozen encoder stream
    const DecoderBlockParams& p = std::get<DecoderBlockParams>(params_[layer]);
    f.x = Tensor::zeros_like(z.x);
    f.y = Tensor::zeros_like(z.y);
    for (int i = 0; i < b; ++i) {
      SampleMasks m = no_masks;
      if (have_masks) {
        const BlockMasks& bm = masks_[layer];
        if (bm.phi1.size()) m.phi1 = slice0(bm.phi1, i);
        if (bm.phi2.size()) m.phi2 = slice0(bm.phi2, i);
        if (bm.phi3.size()) m.phi3 = slice0(bm.phi3, i);
      }
      set_slice0(f.y, i,
                 decoder_residual_1(p, cfg_.heads, cfg_.ln_eps, slice0(z.y, i),
                                    slice0(z.x, i), m));
    }
  }
  return f;
}

State LayerStack::step(int layer, double dt, const State& z) const {
  State f = residual(layer, z);
  State out = z;
  axpy(out, dt, f);
  return out;
}

State LayerStack::residual_vjp(int layer, const State& z, const State& lambda,
                               std::vector<BlockParams>* grads,
                               double gscale) const {
  const SampleMasks no_masks;
  const bool have_masks = !masks_.empty();
  const int b = static_cast<int>((z.x.size() ? z.x : z.y).dim(0));
  State r;
  if (layer < n_split_) {
    EncoderBlockParams* g =
        grads ? &std::get<EncoderBlockParams>((*grads)[layer]) : nullptr;
    const EncoderBlockParams& p = std::get<EncoderBlockParams>(params_[layer]);
    const bool causal = cfg_.kind == ModelKind::kDecoderOnly;
    r.x = Tensor::zeros_like(z.x);
    for (int i = 0; i < b; ++i) {
      SampleMasks m = no_masks;
      if (have_masks) {
        const BlockMasks& bm = masks_[layer];
        if (bm.phi1.size()) m.phi1 = slice0(bm.phi1, i);
        if (bm.phi2.size()) m.phi2 = slice0(bm.phi2, i);
      }
      set_slice0(r.x, i,
                 encoder_residual_vjp_1(p, cfg_.heads, causal, cfg_.ln_eps,
                                        slice0(z.x, i), m, slice0(lambda.x, i),
                                        g, gscale));
    }
    if (z.y.size()) r.y = Tensor::zeros_like(z.y);
  } else {
    DecoderBlockParams* g =
        grads ? &std::get<DecoderBlockParams>((*grads)[layer]) : nullptr;
    const DecoderBlockParams& p = std::get<DecoderBlockParams>(params_[layer]);
    r.x = Tensor::zeros_like(z.x);
    r.y = Tensor::zeros_like(z.y);
    for (int i = 0; i < b; ++i) {
      SampleMasks m = no_masks;
      if (have_masks) {
        const BlockMasks& bm = masks_[layer];
        if (bm.phi1.size()) m.phi1 = slice0(bm.phi1, i);
        if (bm.phi2.size()) m.phi2 = slice0(bm.phi2, i);
        if (bm.phi3.size()) m.phi3 = slice0(bm.phi3, i);
      }
      DecoderVjp v = decoder_residual_vjp_1(p, cfg_.heads, cfg_.ln_eps,
                                            slice0(z.y, i), slice0(z.x, i), m,
                                            slice0(lambda.y, i), g, gscale);
      set_slice0(r.y, i, v.dy);
      set_slice0(r.x, i, v.dxe);
    }
  }
  return r;
}

State LayerStack::adjoint_step(int layer, double dt, const State& z,
                               const State& lambda,
                               std::vector<BlockParams>* grads,
                               double gscale) const {
  State r = residual_vjp(layer, z, lambda, grads, gscale);
  State out = lambda;
  axpy(out, dt, r);
  return out;
}

void LayerStack::refresh_dropout(std::uint64_t seed, std::uint64_t batch_index,
                                 int batch, int s_x, int s_y) {
  masks_.clear();
  if (cfg_.dropout <= 0.0) return;
  const double keep = 1.0 - cfg_.dropout;
  const double inv_keep = 1.0 / keep;
  masks_.resize(params_.size());
  auto gen = [&](int layer, int site, int s) {
    Tensor m({(std::size_t)batch, (std::size_t)s, (std::size_t)cfg_.d});
    for (std::size_t i = 0; i < m.size(); ++i) {
      double u = rng::u01(rng::derive(seed, rng::kDropout, batch_index,
                                      (std::uint64_t)layer * 8 + site, i));
      m.data()[i] = u < keep ? inv_keep : 0.0;
    }
    return m;
  };
  for (int layer = 0; layer < total_layers(); ++layer) {
    const bool dec = layer >= n_split_;
    const int s = dec ? s_y : s_x;
    masks_[layer].phi1 = gen(layer, 0, s);
    masks_[layer].phi2 = gen(layer, 1, s);
    if (dec) masks_[layer].phi3 = gen(layer, 2, s);
  }
}

// ---- parameter traversal ----------------------------------------------------

namespace {

void visit_linear(int layer, const std::string& prefix, LinearParams& p,
                  const ParamVisitor& fn) {
  fn(layer, prefix + ".w", p.w);
  fn(layer, prefix + ".b", p.b);
}

void visit_ln(int layer, const std::string& prefix, LayerNormParams& p,
              const ParamVisitor& fn) {
  fn(layer, prefix + ".gain", p.gain);
  fn(layer, prefix + ".bias", p.bias);
}

void visit_attn(int layer, const std::string& prefix, AttentionParams& p,
                const ParamVisitor& fn) {
  visit_linear(layer, prefix + ".q", p.q, fn);
  visit_linear(layer, prefix + ".k", p.k, fn);
  visit_linear(layer, prefix + ".v", p.v, fn);
  visit_linear(layer, prefix + ".o", p.o, fn);
}

}  // namespace

void visit_params(std::vector<BlockParams>& blocks, const ParamVisitor& fn) {
  for (int layer = 0; layer < static_cast<int>(blocks.size()); ++layer) {
    if (auto* e = std::get_if<EncoderBlockParams>(&blocks[layer])) {
      visit_ln(layer, "ln1", e->ln1, fn);
      visit_attn(layer, "attn", e->attn, fn);
      visit_ln(layer, "ln2", e->ln2, fn);
      visit_linear(layer, "mlp.in", e->mlp.in, fn);
      visit_linear(layer, "mlp.out", e->mlp.out, fn);
    } else {
      auto& dd = std::get<DecoderBlockParams>(blocks[layer]);
      visit_ln(layer, "ln1", dd.ln1, fn);
      visit_attn(layer, "self", dd.self_attn, fn);
      visit_ln(layer, "ln3", dd.ln3, fn);
      visit_attn(layer, "cross", dd.cross_attn, fn);
      visit_ln(layer, "ln2", dd.ln2, fn);
      visit_linear(layer, "mlp.in", dd.mlp.in, fn);
      visit_linear(layer, "mlp.out", dd.mlp.out, fn);
    }
  }
}

void visit_params(const std::vector<BlockParams>& blocks,
                  const ConstParamVisitor& fn) {
  // same traversal; the const view never writes
  visit_params(const_cast<std::vector<BlockParams>&>(blocks),
               [&fn](int layer, const std::string& comp, Tensor& t) {
                 fn(layer, comp, t);
               });
}

// ---- serial reference sweeps ------------------------------------------------

std::vector<State> serial_forward(const LayerStack& stack, const State& z0) {
  std::vector<State> traj;
  traj.reserve(stack.total_layers() + 1);
  traj.push_back(z0);
  for (int n = 0; n < stack.total_layers(); ++n)
    traj.push_back(stack.step(n, stack.step_size(n), traj.back()));
  return traj;
}

std::vector<State> serial_adjoint(const LayerStack& stack,
                                  const std::vector<State>& traj,
                                  const State& lambda_terminal,
                                  std::vector<BlockParams>* grads) {
  const int n_layers = stack.total_layers();
  if (static_cast<int>(traj.size()) != n_layers + 1)
    throw ValidationError("serial_adjoint: trajectory/stack depth mismatch");
  std::vector<State> lam(n_layers + 1);
  lam[n_layers] = lambda_terminal;
  for (int n = n_layers - 1; n >= 0; --n) {
    const double h = stack.step_size(n);
    lam[n] = stack.adjoint_step(n, h, traj[n], lam[n + 1], grads, h);
  }
  return lam;
}

}  // namespace mglp

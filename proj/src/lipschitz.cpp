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
#include "mglp/lipschitz.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

#include "mglp/errors.hpp"
#include "mglp/rng.hpp"

namespace mglp {

namespace {

double l2_norm(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

double diff_norm(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Shared max scan. Each slot was filled by a pure function of its index, so
// the scan order, not the fill order, pins the result.
double max_ratio(const std::vector<double>& ratios) {
  double m = 0.0;
  for (double r : ratios) m = std::max(m, r);
  return m;
}

}  // namespace

LipschitzEstimate estimate_lipschitz(const ProbeFn& f,
                                     const std::vector<std::size_t>& shape,
                                     const ProbeConfig& cfg, std::uint64_t seed,
                                     Executor* ex) {
  if (cfg.samples < 1)
    throw ValidationError("estimate_lipschitz: need at least one sample");
  std::vector<double> ratios(cfg.samples, 0.0);
  auto one = [&](std::size_t i) {
    Tensor x(shape);
    Tensor xp(shape);
    Tensor delta(shape);
    for (std::size_t e = 0; e < x.size(); ++e) {
      x.data()[e] = cfg.input_scale * rng::gaussian(seed, rng::kProbeInput, i, e);
      delta.data()[e] =
          cfg.delta_scale * rng::gaussian(seed, rng::kProbeDelta, i, e);
      xp.data()[e] = x.data()[e] + delta.data()[e];
    }
    const Tensor fx = f(x);
    const Tensor fxp = f(xp);
    const double den = l2_norm(delta.data(), delta.size());
    ratios[i] = den > 0.0 ? diff_norm(fxp, fx) / den : 0.0;
  };
  if (ex)
    ex->parallel_for(static_cast<std::size_t>(cfg.samples), one);
  else
    for (int i = 0; i < cfg.samples; ++i) one(static_cast<std::size_t>(i));

  LipschitzEstimate est;
  est.estimate = max_ratio(ratios);
  est.samples = cfg.samples;
  est.input_scale = cfg.input_scale;
  est.delta_scale = cfg.delta_scale;
  est.seed = seed;
  return est;
}

LipschitzEstimate estimate_lipschitz(const LayerStack& stack, int layer,
                                     const ProbeConfig& cfg, std::uint64_t seed,
                                     Executor* ex) {
  if (layer < 0 || layer >= stack.total_layers())
    throw ValidationError("estimate_lipschitz: layer out of range");
  const StackConfig& sc = stack.config();
  const std::vector<std::size_t> shape = {1,
                                          static_cast<std::size_t>(cfg.seq_len),
                                          static_cast<std::size_t>(sc.d)};
  const bool enc_phase = layer < stack.encoder_layers();
  const bool needs_context =
      sc.kind == ModelKind::kEncoderDecoder && !enc_phase;
  // fold the layer into the stream so every layer sees fresh draws
  const std::uint64_t layer_seed =
      rng::derive(seed, rng::kProbeInput, static_cast<std::uint64_t>(layer), 0, 1);

  // frozen context stream for cross-attention layers: one draw per probe,
  // keyed past the advancing stream's counters so it collides with nothing
  Tensor ctx;
  if (needs_context) {
    ctx = Tensor(shape);
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    for (std::size_t e = 0; e < ctx.size(); ++e)
      ctx.data()[e] = rng::gaussian(layer_seed, rng::kProbeInput, 0, n + e);
  }

  ProbeFn f = [&stack, layer, enc_phase, needs_context, &ctx](const Tensor& in) {
    State z;
    if (enc_phase) {
      z.x = in;
    } else {
      z.y = in;
    }
    if (needs_context) z.x = ctx;
    const State fz = stack.residual(layer, z);
    return enc_phase ? fz.x : fz.y;
  };

  LipschitzEstimate est = estimate_lipschitz(f, shape, cfg, layer_seed, ex);
  est.layer = layer;
  est.seed = seed;  // report the caller's seed, not the folded stream
  return est;
}

std::vector<LipschitzEstimate> estimate_stack(const LayerStack& stack,
                                              const ProbeConfig& cfg,
                                              std::uint64_t seed, Executor* ex) {
  std::vector<LipschitzEstimate> out;
  out.reserve(stack.total_layers());
  for (int l = 0; l < stack.total_layers(); ++l)
    out.push_back(estimate_lipschitz(stack, l, cfg, seed, ex));
  return out;
}

BufferPlan select_buffer_layers(const std::vector<LipschitzEstimate>& estimates,
                                int k_open, int k_close) {
  const int n = static_cast<int>(estimates.size());
  if (k_open < 0 || k_close < 0)
    throw ValidationError("select_buffer_layers: negative buffer count");
  if (k_open + k_close >= n)
    throw ValidationError("select_buffer_layers: buffers would swallow the stack");

  BufferPlan plan;
  plan.k_open = k_open;
  plan.k_close = k_close;
  for (int i = 0; i < k_open; ++i) plan.buffered.push_back(estimates[i].layer);
  for (int i = n - k_close; i < n; ++i)
    plan.buffered.push_back(estimates[i].layer);

  if (!plan.buffered.empty()) {
    double max_buffered = 0.0;
    for (int i = 0; i < k_open; ++i)
      max_buffered = std::max(max_buffered, estimates[i].estimate);
    for (int i = n - k_close; i < n; ++i)
      max_buffered = std::max(max_buffered, estimates[i].estimate);
    for (int i = k_open; i < n - k_close; ++i) {
      if (estimates[i].estimate > max_buffered) {
        plan.interior_spike = true;
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "layer %d estimate %.6g exceeds every buffered layer "
                      "(max %.6g); buffers may be misplaced",
                      estimates[i].layer, estimates[i].estimate, max_buffered);
        plan.warning = buf;
        break;
      }
    }
  }
  return plan;
}

std::vector<WeightChange> track_weight_change(std::vector<BlockParams> now,
                                              std::vector<BlockParams> base) {
  struct Slot {
    int layer;
    std::string comp;
    Tensor* t;
  };
  std::vector<Slot> a, b;
  visit_params(now, [&](int layer, const std::string& comp, Tensor& t) {
    a.push_back({layer, comp, &t});
  });
  visit_params(base, [&](int layer, const std::string& comp, Tensor& t) {
    b.push_back({layer, comp, &t});
  });
  if (a.size() != b.size())
    throw ContractViolation("track_weight_change: parameter sets do not line up");

  std::vector<WeightChange> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].layer != b[i].layer || a[i].comp != b[i].comp ||
        !a[i].t->same_shape(*b[i].t))
      throw ContractViolation("track_weight_change: parameter sets do not line up");
    const double base_norm = l2_norm(b[i].t->data(), b[i].t->size());
    const double drift = diff_norm(*a[i].t, *b[i].t);
    WeightChange wc;
    wc.layer = a[i].layer;
    wc.component = a[i].comp;
    // no drift is zero change even from a zero snapshot; actual drift from a
    // zero snapshot has no meaningful relative measure
    if (drift == 0.0)
      wc.rel_change = 0.0;
    else
      wc.rel_change = base_norm > 0.0 ? drift / base_norm : kUndefinedChange;
    out.push_back(std::move(wc));
  }
  return out;
}

BufferRecommendation recommend_buffers(const std::vector<double>& amplification,
                                       double amp_threshold) {
  if (amp_threshold <= 1.0)
    throw ValidationError("recommend_buffers: threshold must exceed 1");
  const int n = static_cast<int>(amplification.size());
  BufferRecommendation rec;
  rec.amp_threshold = amp_threshold;
  while (rec.k_open < n && amplification[rec.k_open] >= amp_threshold)
    ++rec.k_open;
  while (rec.k_close < n &&
         amplification[n - 1 - rec.k_close] >= amp_threshold)
    ++rec.k_close;
  // a fully hot stack still needs an interior window to parallelize
  while (n > 0 && rec.k_open + rec.k_close >= n) {
    if (rec.k_close >= rec.k_open && rec.k_close > 0)
      --rec.k_close;
    else
      --rec.k_open;
  }
  return rec;
}

BufferRecommendation recommend_buffers(
    const std::vector<LipschitzEstimate>& estimates, const LayerStack& stack,
    double amp_threshold) {
  std::vector<double> amps;
  amps.reserve(estimates.size());
  for (const LipschitzEstimate& e : estimates)
    amps.push_back(1.0 + stack.step_size(e.layer) * e.estimate);
  return recommend_buffers(amps, amp_threshold);
}

std::string lipschitz_csv(const std::vector<LipschitzEstimate>& estimates,
                          const LayerStack& stack) {
  std::string out = "layer, estimate, amplification, samples, seed\n";
  char buf[192];
  for (const LipschitzEstimate& e : estimates) {
    const double amp = 1.0 + stack.step_size(e.layer) * e.estimate;
    std::snprintf(buf, sizeof buf, "%d, %.17g, %.17g, %d, %llu\n", e.layer,
                  e.estimate, amp, e.samples,
                  static_cast<unsigned long long>(e.seed));
    out += buf;
  }
  return out;
}

std::string weight_change_csv(const std::vector<WeightChange>& changes) {
  std::string out = "layer, component, rel_change\n";
  char buf[160];
  for (const WeightChange& c : changes) {
    std::snprintf(buf, sizeof buf, "%d, %s, %.17g\n", c.layer,
                  c.component.c_str(), c.rel_change);
    out += buf;
  }
  return out;
}

}  // namespace mglp

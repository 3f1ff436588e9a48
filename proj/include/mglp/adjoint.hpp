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
#ifndef MGLP_ADJOINT_HPP_
#define MGLP_ADJOINT_HPP_

#include <cstddef>
#include <utility>
#include <vector>

#include "mglp/blocks.hpp"
#include "mglp/errors.hpp"
#include "mglp/executor.hpp"
#include "mglp/mgrit.hpp"
#include "mglp/systems.hpp"

namespace mglp {

// Reversed-time view of the dynamics linearized around a frozen trajectory.
// Adjoint index m corresponds to forward interior time N-m; stepping m -> m+1
// applies the transposed Jacobian of forward layer N-1-m at its recorded
// input. The trajectory is held by reference so one system instance can serve
// every batch.
class StackAdjointSystem {
 public:
  using State = mglp::State;

  StackAdjointSystem(const LayerStack& stack,
                     const std::vector<mglp::State>& interior_traj, int coarsen)
      : stack_(stack), traj_(interior_traj), c_f_(coarsen) {}

  int n_steps() const { return static_cast<int>(traj_.size()) - 1; }

  State phi(int level, int k, const State& mu) const {
    long long stride = 1;
    for (int l = 0; l < level; ++l) stride *= c_f_;
    const int n = n_steps() - 1 - static_cast<int>(k * stride);
    if (n < 0 || n >= n_steps())
      throw ContractViolation("StackAdjointSystem: step outside the recorded trajectory");
    const int layer = stack_.interior_begin() + n;
    const double dt = static_cast<double>(stride) * stack_.interior_h();
    return stack_.adjoint_step(layer, dt, traj_[n], mu, nullptr, 0.0);
  }

  State add(const State& a, const State& b) const { return mglp::add(a, b); }
  State sub(const State& a, const State& b) const { return mglp::sub(a, b); }
  State zeros_like(const State& s) const { return mglp::zeros_like(s); }
  double norm_sq(const State& s) const { return mglp::norm_sq(s); }

 private:
  const LayerStack& stack_;
  const std::vector<mglp::State>& traj_;
  int c_f_;
};

// Iteration budget and hierarchy shape for the two solves. Zero tolerances
// mean run the fixed iteration count; warm starts reuse each solver's states
// from the previous batch.
struct SolveConfig {
  int coarsen = 2;
  int levels = 2;
  int fwd_iters = 2;
  int bwd_iters = 1;
  double fwd_tol = 0.0;
  double bwd_tol = 0.0;
  InitialGuess cold_guess = InitialGuess::kBroadcast;
  bool warm_start = true;
};

struct PhaseTrace {
  std::vector<double> trace;
  bool converged = false;
};

struct ForwardOutcome {
  std::vector<State> traj;  // all layers, buffers included; size total+1
  PhaseTrace phase;
};

struct BackwardOutcome {
  State lambda0;  // sensitivity at the network input
  PhaseTrace phase;
};

// Drives one training step's propagation: buffer layers run serially at unit
// step, the interior window runs through the multilevel solvers, and the
// parameter-gradient pass walks the interior once the adjoint states are in.
class LayerParallelEngine {
 public:
  LayerParallelEngine(const LayerStack& stack, Executor& ex, SolveConfig cfg)
      : stack_(stack),
        ex_(ex),
        cfg_(cfg),
        fwd_sys_(stack, cfg.coarsen),
        adj_sys_(stack, interior_traj_, cfg.coarsen),
        fwd_(fwd_sys_, stack.interior_layers(), cfg.coarsen, cfg.levels, ex),
        bwd_(adj_sys_, stack.interior_layers(), cfg.coarsen, cfg.levels, ex) {}

  SolveConfig& config() { return cfg_; }
  const SolveConfig& config() const { return cfg_; }

  ForwardOutcome forward(const State& z0) {
    const int total = stack_.total_layers();
    const int ib = stack_.interior_begin();
    const int ie = stack_.interior_end();
    const int n = stack_.interior_layers();
    ForwardOutcome out;
    out.traj.resize(total + 1);
    out.traj[0] = z0;
    for (int l = 0; l < ib; ++l)
      out.traj[l + 1] = stack_.step(l, stack_.step_size(l), out.traj[l]);

    fwd_.set_initial_condition(out.traj[ib]);
    fwd_.apply_initial_guess(first_fwd_ || !cfg_.warm_start
                                 ? cfg_.cold_guess
                                 : InitialGuess::kWarmStart);
    first_fwd_ = false;
    auto res = fwd_.solve_forward(cfg_.fwd_iters, cfg_.fwd_tol);
    out.phase.trace = std::move(res.trace);
    out.phase.converged = res.converged;
    for (int j = 0; j <= n; ++j) out.traj[ib + j] = fwd_.states(0)[j];

    for (int l = ie; l < total; ++l)
      out.traj[l + 1] = stack_.step(l, stack_.step_size(l), out.traj[l]);
    return out;
  }

  BackwardOutcome backward(const std::vector<State>& traj,
                           const State& lambda_terminal,
                           std::vector<BlockParams>* grads) {
    const int total = stack_.total_layers();
    const int ib = stack_.interior_begin();
    const int ie = stack_.interior_end();
    const int n = stack_.interior_layers();
    if (static_cast<int>(traj.size()) != total + 1)
      throw ValidationError("backward: trajectory does not match the stack depth");

    BackwardOutcome out;
    State lam = lambda_terminal;
    for (int l = total - 1; l >= ie; --l)
      lam = stack_.adjoint_step(l, stack_.step_size(l), traj[l], lam, grads,
                                stack_.step_size(l));

    interior_traj_.assign(traj.begin() + ib, traj.begin() + ib + n + 1);
    bwd_.set_initial_condition(lam);
    bwd_.apply_initial_guess(first_bwd_ || !cfg_.warm_start
                                 ? cfg_.cold_guess
                                 : InitialGuess::kWarmStart);
    first_bwd_ = false;
    auto res = bwd_.solve_forward(cfg_.bwd_iters, cfg_.bwd_tol);
    out.phase.trace = std::move(res.trace);
    out.phase.converged = res.converged;

    // parameter pass: each interior layer owns its gradient slots, so the
    // sweep parallelizes without any merge step
    const std::vector<State>& mu = bwd_.states(0);
    if (grads) {
      const double h = stack_.interior_h();
      ex_.parallel_for(n, [&](std::size_t i) {
        const int layer = ib + static_cast<int>(i);
        const State& lam_next = mu[n - 1 - static_cast<int>(i)];
        stack_.residual_vjp(layer, traj[layer], lam_next, grads, h);
      });
    }

    lam = mu[n];
    for (int l = ib - 1; l >= 0; --l)
      lam = stack_.adjoint_step(l, stack_.step_size(l), traj[l], lam, grads,
                                stack_.step_size(l));
    out.lambda0 = std::move(lam);
    return out;
  }

  // Warm-state snapshot, used to make measurement-only solves invisible to
  // the batches that follow.
  struct WarmSnapshot {
    std::vector<State> fwd, bwd;
    bool first_fwd = true, first_bwd = true;
  };

  WarmSnapshot snapshot() const {
    return WarmSnapshot{fwd_.states(0), bwd_.states(0), first_fwd_, first_bwd_};
  }

  void restore(const WarmSnapshot& s) {
    fwd_.states(0) = s.fwd;
    bwd_.states(0) = s.bwd;
    first_fwd_ = s.first_fwd;
    first_bwd_ = s.first_bwd;
  }

  void reset() {
    first_fwd_ = true;
    first_bwd_ = true;
  }

 private:
  const LayerStack& stack_;
  Executor& ex_;
  SolveConfig cfg_;
  std::vector<State> interior_traj_;  // declared before adj_sys_, which refers to it
  StackForwardSystem fwd_sys_;
  StackAdjointSystem adj_sys_;
  MgritSolver<StackForwardSystem> fwd_;
  MgritSolver<StackAdjointSystem> bwd_;
  bool first_fwd_ = true;
  bool first_bwd_ = true;
};

}  // namespace mglp

#endif  // MGLP_ADJOINT_HPP_

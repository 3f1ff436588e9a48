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
#ifndef MGLP_MGRIT_HPP_
#define MGLP_MGRIT_HPP_

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "mglp/errors.hpp"
#include "mglp/executor.hpp"

namespace mglp {

// How level-0 states are seeded before the first cycle. Warm start reuses
// whatever the previous solve left behind.
enum class InitialGuess { kBroadcast, kZero, kWarmStart };

// Ratio of the last two residual norms; zero over zero counts as converged.
inline double convergence_factor(const std::vector<double>& trace) {
  if (trace.size() < 2)
    throw ValidationError("convergence_factor: need at least two residual norms");
  double prev = trace[trace.size() - 2];
  if (prev == 0.0) return 0.0;
  return trace.back() / prev;
}

// Multilevel solver for the lower-bidiagonal time-stepping system
//   V[0] = Z0,  V[j] = Phi(V[j-1]),  j = 1..N.
//
// The System supplies the propagator and the state algebra:
//   State phi(int level, int k, const State&)   step k -> k+1 at that level
//   State add/sub(const State&, const State&)
//   State zeros_like(const State&)
//   double norm_sq(const State&)
//
// Coarse levels carry the full-approximation form of the correction equation.
// Each coarse level stores the frozen restriction B of the finer iterate, the
// injected residual rho, and a cache of Phi(B[k-1]); the working update is
//
//   V[j] = B[j] + ((Phi(V[j-1]) - Phi(B[j-1])) + rho[j])
//
// which cancels exactly (not just to rounding) when V == B and rho == 0, so a
// converged fine solution is a bitwise fixed point of the whole cycle.
template <typename System>
class MgritSolver {
 public:
  using State = typename System::State;

  struct Result {
    std::vector<double> trace;  // one fine-level residual norm per cycle
    bool converged = false;
  };

  MgritSolver(System& sys, int n_steps, int coarsen, int levels, Executor& ex)
      : sys_(sys), ex_(ex), c_f_(coarsen), n_levels_(levels) {
    if (c_f_ < 2) throw ValidationError("MgritSolver: coarsening factor must be >= 2");
    if (n_levels_ < 1) throw ValidationError("MgritSolver: need at least one level");
    if (n_steps < 1) throw ValidationError("MgritSolver: need at least one step");
    long long stride = 1;
    for (int l = 0; l < std::max(n_levels_ - 1, 1); ++l) {
      stride *= c_f_;
      if (stride > n_steps)
        throw ValidationError(
            "MgritSolver: too many levels, the coarsest would hold no full step");
    }
    if (n_steps % stride != 0)
      throw ValidationError(
          "MgritSolver: step count must be divisible by coarsen^(levels-1)");
    lv_.resize(n_levels_);
    int n = n_steps;
    for (int l = 0; l < n_levels_; ++l) {
      lv_[l].n = n;
      lv_[l].v.resize(n + 1);
      if (l > 0) {
        lv_[l].base.resize(n + 1);
        lv_[l].rho.resize(n + 1);
        lv_[l].phib.resize(n + 1);
      }
      if (l + 1 < n_levels_) n /= c_f_;
    }
  }

  int levels() const { return n_levels_; }
  int coarsen() const { return c_f_; }
  int n_steps(int level = 0) const { return lv_[level].n; }
  std::vector<State>& states(int level = 0) { return lv_[level].v; }
  const std::vector<State>& states(int level = 0) const { return lv_[level].v; }
  // Diagnostics: the frozen finer iterate and injected residual of a coarse
  // level, valid after restrict_to.
  const std::vector<State>& base(int level) const { return lv_[level].base; }
  const std::vector<State>& rhs(int level) const { return lv_[level].rho; }

  void set_initial_condition(const State& z0) { lv_[0].v[0] = z0; }

  void apply_initial_guess(InitialGuess policy) {
    Level& fine = lv_[0];
    switch (policy) {
      case InitialGuess::kBroadcast:
        for (int j = 1; j <= fine.n; ++j) fine.v[j] = fine.v[0];
        break;
      case InitialGuess::kZero:
        for (int j = 1; j <= fine.n; ++j) fine.v[j] = sys_.zeros_like(fine.v[0]);
        break;
      case InitialGuess::kWarmStart:
        break;
    }
  }

  // One chunk per coarse interval; fine points are recomputed serially inside
  // their interval, so chunks never touch each other's indices.
  void f_relax(int level) {
    Level& lev = lv_[level];
    const int nc = lev.n / c_f_;
    std::vector<ChunkTask> tasks(nc);
    for (int k = 0; k < nc; ++k) {
      tasks[k].write_begin = static_cast<std::size_t>(k) * c_f_ + 1;
      tasks[k].write_end = static_cast<std::size_t>(k + 1) * c_f_;
      tasks[k].fn = [this, level, k] {
        for (int i = 1; i < c_f_; ++i) relax_update(level, k * c_f_ + i);
      };
    }
    ex_.run(tasks);
  }

  void c_relax(int level) {
    Level& lev = lv_[level];
    const int nc = lev.n / c_f_;
    std::vector<ChunkTask> tasks(nc);
    for (int k = 1; k <= nc; ++k) {
      tasks[k - 1].write_begin = static_cast<std::size_t>(k) * c_f_;
      tasks[k - 1].write_end = static_cast<std::size_t>(k) * c_f_ + 1;
      tasks[k - 1].fn = [this, level, k] { relax_update(level, k * c_f_); };
    }
    ex_.run(tasks);
  }

  void fcf_relax(int level) {
    f_relax(level);
    c_relax(level);
    f_relax(level);
  }

  // State-aligned residual rows: row 0 is the initial-condition equation
  // (identically zero on the fine level), row j the equation for V[j].
  std::vector<State> residual_rows(int level) {
    Level& lev = lv_[level];
    std::vector<State> r(lev.n + 1);
    if (level == 0) {
      r[0] = sys_.zeros_like(lev.v[0]);
    } else {
      r[0] = sys_.add(sys_.sub(lev.base[0], lev.v[0]), lev.rho[0]);
    }
    const int nc = lev.n / c_f_;
    std::vector<ChunkTask> tasks(nc);
    for (int k = 0; k < nc; ++k) {
      tasks[k].write_begin = static_cast<std::size_t>(k) * c_f_ + 1;
      tasks[k].write_end = static_cast<std::size_t>(k + 1) * c_f_ + 1;
      tasks[k].fn = [this, level, k, &r, &lev] {
        for (int i = 1; i <= c_f_; ++i) {
          const int j = k * c_f_ + i;
          State p = sys_.phi(level, j - 1, lev.v[j - 1]);
          if (level == 0) {
            r[j] = sys_.sub(p, lev.v[j]);
          } else {
            State lhs = sys_.add(sys_.sub(p, lev.phib[j]), lev.rho[j]);
            r[j] = sys_.sub(lhs, sys_.sub(lev.v[j], lev.base[j]));
          }
        }
      };
    }
    ex_.run(tasks);
    return r;
  }

  double norm_of(const std::vector<State>& rows) const {
    double s = 0.0;
    for (const State& x : rows) s += sys_.norm_sq(x);
    return std::sqrt(s);
  }

  double fine_residual_norm() { return norm_of(residual_rows(0)); }

  // Injection: coarse row k takes fine row k*c_f. The coarse level also
  // freezes the finer iterate as its base and starts from it.
  void restrict_to(int level, const std::vector<State>& fine_rows) {
    Level& c = lv_[level];
    const Level& f = lv_[level - 1];
    for (int k = 0; k <= c.n; ++k) {
      c.base[k] = f.v[static_cast<std::size_t>(k) * c_f_];
      c.rho[k] = fine_rows[static_cast<std::size_t>(k) * c_f_];
      c.v[k] = c.base[k];
    }
    ex_.parallel_for(c.n, [this, &c, level](std::size_t i) {
      const int k = static_cast<int>(i) + 1;
      c.phib[k] = sys_.phi(level, k - 1, c.base[k - 1]);
    });
  }

  // Add the coarse increment back at the matching fine points.
  void correct_from(int level) {
    Level& c = lv_[level];
    Level& f = lv_[level - 1];
    ex_.parallel_for(c.n, [this, &c, &f](std::size_t i) {
      const int k = static_cast<int>(i) + 1;
      State e = sys_.sub(c.v[k], c.base[k]);
      f.v[static_cast<std::size_t>(k) * c_f_] =
          sys_.add(f.v[static_cast<std::size_t>(k) * c_f_], e);
    });
  }

  // Sequential forward substitution in the same grouping as relax_update, so
  // the coarsest solve is exact for its level.
  void exact_solve(int level) {
    Level& lev = lv_[level];
    lev.v[0] = lev.base[0];  // rho[0] is identically zero: the IC row is exact
    for (int j = 1; j <= lev.n; ++j) relax_update(level, j);
  }

  // Returns the fine residual norm measured mid-cycle (after FCF relaxation,
  // before coarse correction); that is the per-iteration trace entry.
  double v_cycle() {
    fcf_relax(0);
    std::vector<State> rows = residual_rows(0);
    double nrm = norm_of(rows);
    if (n_levels_ > 1) {
      restrict_to(1, rows);
      descend(1);
      correct_from(1);
      f_relax(0);
    }
    return nrm;
  }

  Result solve_forward(int max_iters, double tol) {
    if (max_iters < 1)
      throw ValidationError("solve_forward: need at least one iteration");
    Result res;
    for (int it = 0; it < max_iters; ++it) {
      double nrm = v_cycle();
      res.trace.push_back(nrm);
      if (!std::isfinite(nrm)) break;
      if (nrm <= tol * res.trace.front()) {
        res.converged = true;
        break;
      }
    }
    return res;
  }

 private:
  struct Level {
    int n = 0;
    std::vector<State> v;     // current iterate, v[0] holds the level's IC
    std::vector<State> base;  // frozen restriction of the finer iterate
    std::vector<State> rho;   // injected residual
    std::vector<State> phib;  // phib[j] = phi(base[j-1]), refreshed on restrict
  };

  void relax_update(int level, int j) {
    Level& lev = lv_[level];
    State p = sys_.phi(level, j - 1, lev.v[j - 1]);
    if (level == 0) {
      lev.v[j] = std::move(p);
    } else {
      State corr = sys_.add(sys_.sub(p, lev.phib[j]), lev.rho[j]);
      lev.v[j] = sys_.add(lev.base[j], corr);
    }
  }

  // Intermediate levels get exactly one cycle; the coarsest is solved exactly.
  void descend(int level) {
    if (level == n_levels_ - 1) {
      exact_solve(level);
      return;
    }
    fcf_relax(level);
    std::vector<State> rows = residual_rows(level);
    restrict_to(level + 1, rows);
    descend(level + 1);
    correct_from(level + 1);
    f_relax(level);
  }

  System& sys_;
  Executor& ex_;
  int c_f_;
  int n_levels_;
  std::vector<Level> lv_;
};

}  // namespace mglp

#endif  // MGLP_MGRIT_HPP_

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
#ifndef MGLP_CONTROLLER_HPP_
#define MGLP_CONTROLLER_HPP_

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "mglp/adjoint.hpp"
#include "mglp/errors.hpp"

namespace mglp {

// Watches the solvers' residual traces while training runs inexactly, and
// reacts when contraction is lost: spend more iterations, or give up on the
// parallel path for the rest of the run.

enum class IndicatorPolicy { kIncreaseIterations, kSwitchSerial };
enum class IndicatorDecision { kKeep, kIncreaseIterations, kSwitchSerial };

struct IndicatorConfig {
  int probe_period = 500;
  double threshold = 1.0;
  IndicatorPolicy policy = IndicatorPolicy::kIncreaseIterations;
  int max_iter_cap = 16;
  // the doubled-iteration gradient is better and already paid for; set false
  // to discard it and update from a separate nominal solve instead
  bool use_probe_gradient = true;
};

struct IndicatorReport {
  long long batch = 0;
  double fwd_factor = 0.0;
  double bwd_factor = 0.0;
  IndicatorDecision decision = IndicatorDecision::kKeep;
};

inline const char* decision_name(IndicatorDecision d) {
  switch (d) {
    case IndicatorDecision::kKeep: return "keep";
    case IndicatorDecision::kIncreaseIterations: return "increase_iterations";
    case IndicatorDecision::kSwitchSerial: return "switch_serial";
  }
  return "?";
}

// Contraction over the last measured pair. Short traces mean the solve ended
// before a second measurement, which only happens when it converged at once.
inline double last_pair_factor(const std::vector<double>& trace) {
  const std::size_t n = trace.size();
  if (n < 2 || trace[n - 2] == 0.0) return 0.0;
  return trace[n - 1] / trace[n - 2];
}

// Pure decision rule: a factor above threshold in either phase calls for
// action; doubling falls back to switching once neither phase can grow.
inline IndicatorDecision decide(double fwd_factor, double bwd_factor,
                                const IndicatorConfig& cfg, int fwd_iters,
                                int bwd_iters) {
  if (cfg.threshold <= 0.0)
    throw ValidationError("decide: threshold must be positive");
  const double worst = std::max(fwd_factor, bwd_factor);
  if (worst <= cfg.threshold) return IndicatorDecision::kKeep;
  if (cfg.policy == IndicatorPolicy::kSwitchSerial)
    return IndicatorDecision::kSwitchSerial;
  const bool can_grow =
      fwd_iters < cfg.max_iter_cap || bwd_iters < cfg.max_iter_cap;
  return can_grow ? IndicatorDecision::kIncreaseIterations
                  : IndicatorDecision::kSwitchSerial;
}

// Doubles both iteration budgets for one measurement run, then restores the
// nominal counts no matter how the run ends.
class ProbeScope {
 public:
  explicit ProbeScope(SolveConfig& cfg)
      : cfg_(cfg), fwd_(cfg.fwd_iters), bwd_(cfg.bwd_iters) {
    cfg_.fwd_iters = 2 * fwd_;
    cfg_.bwd_iters = 2 * bwd_;
  }
  ~ProbeScope() {
    cfg_.fwd_iters = fwd_;
    cfg_.bwd_iters = bwd_;
  }
  ProbeScope(const ProbeScope&) = delete;
  ProbeScope& operator=(const ProbeScope&) = delete;

 private:
  SolveConfig& cfg_;
  int fwd_, bwd_;
};

// Between-batch bookkeeping: when a probe is due, whether the run has
// switched to serial, and the report log for the diagnostics table.
class InexactnessMonitor {
 public:
  explicit InexactnessMonitor(IndicatorConfig cfg) : cfg_(cfg) {
    if (cfg_.probe_period < 1)
      throw ValidationError("InexactnessMonitor: probe_period must be >= 1");
    if (cfg_.threshold <= 0.0)
      throw ValidationError("InexactnessMonitor: threshold must be positive");
  }

  const IndicatorConfig& config() const { return cfg_; }
  bool switched() const { return switched_; }
  bool due(long long batch) const {
    return !switched_ && batch % cfg_.probe_period == 0;
  }

  // Folds a probe's measured factors into the solver's budget (or the switch
  // flag) and logs the report.
  IndicatorReport record(long long batch, double fwd_factor, double bwd_factor,
                         SolveConfig& solve) {
    IndicatorReport rep;
    rep.batch = batch;
    rep.fwd_factor = fwd_factor;
    rep.bwd_factor = bwd_factor;
    rep.decision = decide(fwd_factor, bwd_factor, cfg_, solve.fwd_iters,
                          solve.bwd_iters);
    switch (rep.decision) {
      case IndicatorDecision::kKeep:
        break;
      case IndicatorDecision::kIncreaseIterations:
        solve.fwd_iters = std::min(2 * solve.fwd_iters, cfg_.max_iter_cap);
        solve.bwd_iters = std::min(2 * solve.bwd_iters, cfg_.max_iter_cap);
        break;
      case IndicatorDecision::kSwitchSerial:
        switched_ = true;
        break;
    }
    reports_.push_back(rep);
    return rep;
  }

  const std::vector<IndicatorReport>& reports() const { return reports_; }

 private:
  IndicatorConfig cfg_;
  bool switched_ = false;
  std::vector<IndicatorReport> reports_;
};

inline std::string indicator_csv(const std::vector<IndicatorReport>& reports) {
  std::string out = "batch, fwd_factor, bwd_factor, decision\n";
  char buf[160];
  for (const IndicatorReport& r : reports) {
    std::snprintf(buf, sizeof buf, "%lld, %.17g, %.17g, %s\n", r.batch,
                  r.fwd_factor, r.bwd_factor, decision_name(r.decision));
    out += buf;
  }
  return out;
}

}  // namespace mglp

#endif  // MGLP_CONTROLLER_HPP_

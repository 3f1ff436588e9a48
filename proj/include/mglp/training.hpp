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
#ifndef MGLP_TRAINING_HPP_
#define MGLP_TRAINING_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mglp/adjoint.hpp"
#include "mglp/controller.hpp"
#include "mglp/model.hpp"
#include "mglp/optimizer.hpp"
#include "mglp/tasks.hpp"

namespace mglp {

// Training loop over the token tasks. kSerial steps every layer in order,
// kLayerParallel drives the multilevel engine with a fixed budget, and
// kSwitching adds the inexactness monitor on top of the engine: periodic
// probes that can raise the budget or hand the run over to the serial path
// mid-stream without perturbing a single update.

enum class TrainMode { kSerial, kLayerParallel, kSwitching };

const char* mode_name(TrainMode m);

struct TrainConfig {
  TrainMode mode = TrainMode::kLayerParallel;
  OptConfig opt;
  SolveConfig solve;
  IndicatorConfig indicator;
  int batch_size = 8;
  int epochs = 1;
  int workers = 1;
  std::uint64_t seed = 7;
  // >= 0 forces the serial handover at this batch regardless of the
  // indicator; 0 makes the whole run serial, bit for bit.
  long long manual_switch_batch = -1;
  int val_every = 25;
};

struct MetricsRow {
  long long batch = 0;
  double loss = 0.0;
  double val_metric = 0.0;  // token accuracy on the held-out split
  std::string mode;         // path that produced this update
  int fwd_iters = 0;        // 0 on the serial path
  int bwd_iters = 0;
  double fwd_factor = 0.0;  // last measured contraction, 0 when untracked
  double bwd_factor = 0.0;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::vector<IndicatorReport> reports;
  bool switched = false;
  long long switch_batch = -1;  // first batch the serial path processed
  double final_val = 0.0;
  std::string csv;           // rendered metrics table
  std::string switch_state;  // checkpoint captured at the handover, or empty
  std::string final_state;   // checkpoint at the end of the run
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);

// One line per run configuration, embedded in checkpoints so a resumed run
// can confirm it matches. Deliberately excludes the schedule knobs (mode,
// switch batch, indicator, worker count): a handover mid-run continues the
// same problem, and worker count never changes the numbers.
std::string config_echo(const TaskSpec& task, const ModelConfig& mcfg,
                        const TrainConfig& tcfg);

TrainResult run_training(const TaskSpec& task, const ModelConfig& mcfg,
                         const TrainConfig& tcfg);

// Same run, but parameters (and optimizer slots, when present) are seeded
// from a checkpoint blob before batch 0. The blob must carry this run's
// config echo and a zero batch counter; mid-run blobs belong to resume, not
// here. Entry point for fine-tuning and for experiments that edit weights
// between construction and training.
TrainResult run_training(const TaskSpec& task, const ModelConfig& mcfg,
                         const TrainConfig& tcfg,
                         const std::string& start_state);

// Re-runs the post-switch tail of a switching run from its captured
// checkpoint on the serial path and compares against the original run.
struct ReplayOutcome {
  bool switched = false;
  long long switch_batch = -1;
  long long compared_batches = 0;
  bool losses_match = false;  // bitwise, every post-switch batch
  bool state_matches = false;  // bitwise, final parameters + optimizer
};

ReplayOutcome switching_replay(const TaskSpec& task, const ModelConfig& mcfg,
                               const TrainConfig& tcfg);
ReplayOutcome switching_replay(const TaskSpec& task, const ModelConfig& mcfg,
                               const TrainConfig& tcfg,
                               const std::string& start_state);

// ---- self-checks ------------------------------------------------------------

// End-to-end directional derivative check on a small encoder model, serial
// path, exact map. Returns the worst relative error over `directions` random
// directions; `sabotage` flips the analytic value's sign for one direction,
// which a healthy check must flag.
double gradient_check(int directions, bool sabotage = false);

// Same check for an arbitrary task/model pair; `step` is the central
// difference half-width.
double gradient_check(const TaskSpec& task, const ModelConfig& mcfg,
                      std::uint64_t model_seed, int directions, double step,
                      bool sabotage = false);

struct VerifyCheck {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double bound = 0.0;
  std::string detail;
};

// Fast invariants runnable from the command line: the converged solution is
// a fixed point of one cycle, gradients match finite differences (and the
// check catches a deliberate fault), short trainings are byte-identical
// across worker counts, and the two-level scalar solve terminates exactly
// within its pinned cycle budget. A non-empty filter runs only the checks
// whose names contain it.
std::vector<VerifyCheck> verify_suite(int workers = 2,
                                      const std::string& filter = "");

std::string verify_report(const std::vector<VerifyCheck>& checks);

}  // namespace mglp

#endif  // MGLP_TRAINING_HPP_

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
#include <cmath>
#include <cstring>
#include <string>

#include "doctest.h"
#include "mglp/errors.hpp"
#include "mglp/training.hpp"
#include "test_util.hpp"

TEST_SUITE_BEGIN("training");

using namespace mglp;

namespace {

// Small stack, four batches per epoch: enough to exercise every path fast.
struct Setup {
  TaskSpec task;
  ModelConfig mcfg;
  TrainConfig tcfg;
};

Setup classification_setup() {
  Setup s;
  s.task.kind = TaskKind::kTokenClassification;
  s.task.vocab = 11;
  s.task.seq_len = 6;
  s.task.train_size = 32;
  s.task.val_size = 16;
  s.task.seed = 9;
  s.mcfg.stack.kind = ModelKind::kEncoder;
  s.mcfg.stack.d = 8;
  s.mcfg.stack.heads = 2;
  s.mcfg.stack.ffn = 12;
  s.mcfg.stack.n_enc = 8;
  s.mcfg.vocab = s.task.vocab;
  s.mcfg.max_seq = 8;
  s.tcfg.batch_size = 8;
  s.tcfg.epochs = 1;
  s.tcfg.val_every = 2;
  s.tcfg.seed = 33;
  return s;
}

bool losses_bitwise_equal(const TrainResult& a, const TrainResult& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (std::memcmp(&a.rows[i].loss, &b.rows[i].loss, sizeof(double)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("tightly iterated engine matches the serial loop") {
  Setup s = classification_setup();
  s.tcfg.mode = TrainMode::kSerial;
  const TrainResult serial = run_training(s.task, s.mcfg, s.tcfg);

  s.tcfg.mode = TrainMode::kLayerParallel;
  s.tcfg.solve.fwd_iters = 20;
  s.tcfg.solve.bwd_iters = 20;
  const TrainResult par = run_training(s.task, s.mcfg, s.tcfg);

  REQUIRE(serial.rows.size() == par.rows.size());
  for (std::size_t i = 0; i < serial.rows.size(); ++i) {
    CHECK(testutil::rel_err(serial.rows[i].loss, par.rows[i].loss) < 1e-8);
    // accuracy is a discrete count; at this tolerance it must agree exactly
    CHECK(serial.rows[i].val_metric == par.rows[i].val_metric);
  }
  CHECK(serial.rows.front().mode == "serial");
  CHECK(par.rows.front().mode == "layer_parallel");
  CHECK(serial.rows.front().fwd_iters == 0);
  CHECK(par.rows.front().fwd_iters == 20);
}

TEST_CASE("inexact budgets still produce a finite usable run") {
  Setup s = classification_setup();
  s.tcfg.mode = TrainMode::kLayerParallel;
  s.tcfg.epochs = 2;
  const TrainResult res = run_training(s.task, s.mcfg, s.tcfg);
  CHECK(res.rows.size() == 8);
  for (const MetricsRow& r : res.rows) {
    CHECK(std::isfinite(r.loss));
    CHECK(r.val_metric >= 0.0);
    CHECK(r.val_metric <= 1.0);
    CHECK(r.fwd_iters == 2);
    CHECK(r.bwd_iters == 1);
  }
  CHECK_FALSE(res.switched);
  CHECK(res.csv.rfind("batch, loss, val_metric, mode", 0) == 0);
  CHECK(res.final_state.size() > 0);
  CHECK(res.switch_state.empty());
}

TEST_CASE("manual handover at batch zero is the serial run, bit for bit") {
  Setup s = classification_setup();
  s.tcfg.mode = TrainMode::kSerial;
  const TrainResult serial = run_training(s.task, s.mcfg, s.tcfg);

  s.tcfg.mode = TrainMode::kSwitching;
  s.tcfg.manual_switch_batch = 0;
  const TrainResult sw = run_training(s.task, s.mcfg, s.tcfg);

  CHECK(sw.switched);
  CHECK(sw.switch_batch == 0);
  CHECK(sw.csv == serial.csv);
  CHECK(sw.final_state == serial.final_state);
}

TEST_CASE("manual handover mid-run replays bitwise from its checkpoint") {
  Setup s = classification_setup();
  s.tcfg.mode = TrainMode::kSwitching;
  s.tcfg.manual_switch_batch = 2;
  // keep the indicator quiet so only the manual trigger acts
  s.tcfg.indicator.probe_period = 1000000;
  s.tcfg.indicator.threshold = 1e9;

  const TrainResult res = run_training(s.task, s.mcfg, s.tcfg);
  CHECK(res.switched);
  CHECK(res.switch_batch == 2);
  CHECK(res.rows[0].mode == "layer_parallel");
  CHECK(res.rows[1].mode == "layer_parallel");
  CHECK(res.rows[2].mode == "serial");
  CHECK(res.rows[3].mode == "serial");
  CHECK(res.switch_state.size() > 0);

  const ReplayOutcome rep = switching_replay(s.task, s.mcfg, s.tcfg);
  CHECK(rep.switched);
  CHECK(rep.switch_batch == 2);
  CHECK(rep.compared_batches == 2);
  CHECK(rep.losses_match);
  CHECK(rep.state_matches);
}

TEST_CASE("indicator handover captures a bitwise-replayable state") {
  Setup s = classification_setup();
  s.tcfg.mode = TrainMode::kSwitching;
  s.tcfg.indicator.probe_period = 2;
  s.tcfg.indicator.threshold = 1e-12;  // anything measurable trips it
  s.tcfg.indicator.policy = IndicatorPolicy::kSwitchSerial;

  const TrainResult res = run_training(s.task, s.mcfg, s.tcfg);
  REQUIRE(res.switched);
  CHECK(res.switch_batch >= 1);
  REQUIRE(!res.reports.empty());
  CHECK(res.reports.back().decision == IndicatorDecision::kSwitchSerial);
  // exactly one switch: every earlier report kept the budget
  for (std::size_t i = 0; i + 1 < res.reports.size(); ++i)
    CHECK(res.reports[i].decision != IndicatorDecision::kSwitchSerial);
  for (const MetricsRow& r : res.rows) {
    if (r.batch >= res.switch_batch) CHECK(r.mode == "serial");
  }

  const ReplayOutcome rep = switching_replay(s.task, s.mcfg, s.tcfg);
  CHECK(rep.switched);
  CHECK(rep.losses_match);
  CHECK(rep.state_matches);
}

TEST_CASE("measurement-only probes leave the update stream untouched") {
  Setup s = classification_setup();
  s.tcfg.mode = TrainMode::kLayerParallel;
  const TrainResult plain = run_training(s.task, s.mcfg, s.tcfg);

  s.tcfg.mode = TrainMode::kSwitching;
  s.tcfg.indicator.probe_period = 2;
  s.tcfg.indicator.threshold = 1e9;  // probes always decide to keep
  s.tcfg.indicator.use_probe_gradient = false;
  const TrainResult probed = run_training(s.task, s.mcfg, s.tcfg);

  CHECK_FALSE(probed.switched);
  CHECK(probed.reports.size() == 2);  // batches 0 and 2
  CHECK(losses_bitwise_equal(plain, probed));
  CHECK(plain.final_state == probed.final_state);
}

TEST_CASE("probe-gradient runs consume the doubled budget as the update") {
  Setup s = classification_setup();
  s.tcfg.mode = TrainMode::kSwitching;
  s.tcfg.indicator.probe_period = 4;
  s.tcfg.indicator.threshold = 1e9;
  s.tcfg.indicator.use_probe_gradient = true;
  const TrainResult res = run_training(s.task, s.mcfg, s.tcfg);
  CHECK(res.rows[0].fwd_iters == 4);  // doubled from 2
  CHECK(res.rows[0].bwd_iters == 2);  // doubled from 1
  CHECK(res.rows[1].fwd_iters == 2);
  CHECK(res.rows[1].bwd_iters == 1);
}

TEST_CASE("metrics are byte-identical across worker counts") {
  Setup s = classification_setup();
  s.tcfg.mode = TrainMode::kLayerParallel;
  s.tcfg.epochs = 1;
  std::string first_csv;
  std::string first_state;
  for (int workers : {1, 2, 4}) {
    s.tcfg.workers = workers;
    const TrainResult r = run_training(s.task, s.mcfg, s.tcfg);
    if (workers == 1) {
      first_csv = r.csv;
      first_state = r.final_state;
    } else {
      CHECK(r.csv == first_csv);
      CHECK(r.final_state == first_state);
    }
  }
}

TEST_CASE("buffered decoder stack trains through the engine") {
  Setup s = classification_setup();
  s.mcfg.stack.kind = ModelKind::kDecoderOnly;
  s.mcfg.stack.n_enc = 0;
  s.mcfg.stack.n_dec = 10;
  s.mcfg.stack.buffer_open = 1;
  s.mcfg.stack.buffer_close = 1;

  s.tcfg.mode = TrainMode::kSerial;
  const TrainResult serial = run_training(s.task, s.mcfg, s.tcfg);
  s.tcfg.mode = TrainMode::kLayerParallel;
  s.tcfg.solve.fwd_iters = 20;
  s.tcfg.solve.bwd_iters = 20;
  const TrainResult par = run_training(s.task, s.mcfg, s.tcfg);
  for (std::size_t i = 0; i < serial.rows.size(); ++i)
    CHECK(testutil::rel_err(serial.rows[i].loss, par.rows[i].loss) < 1e-8);
}

TEST_CASE("translation trains the two-stream model end to end") {
  Setup s = classification_setup();
  s.task.kind = TaskKind::kTinyTranslation;
  s.mcfg.stack.kind = ModelKind::kEncoderDecoder;
  s.mcfg.stack.n_enc = 2;
  s.mcfg.stack.n_dec = 2;
  s.tcfg.mode = TrainMode::kSerial;
  const TrainResult res = run_training(s.task, s.mcfg, s.tcfg);
  for (const MetricsRow& r : res.rows) {
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss > 0.0);
  }
  CHECK(res.final_val >= 0.0);
  CHECK(res.final_val <= 1.0);
}

TEST_CASE("loss trends down over a few epochs of the copy task") {
  Setup s = classification_setup();
  s.task.kind = TaskKind::kCopySequence;
  s.tcfg.mode = TrainMode::kSerial;
  s.tcfg.epochs = 6;
  s.tcfg.opt.lr = 3e-3;
  const TrainResult res = run_training(s.task, s.mcfg, s.tcfg);
  const double head = res.rows.front().loss;
  const double tail = res.rows.back().loss;
  CHECK(tail < head);
}

TEST_CASE("incompatible task and model pairings are rejected") {
  Setup s = classification_setup();
  SUBCASE("translation needs two streams") {
    s.task.kind = TaskKind::kTinyTranslation;
    CHECK_THROWS_AS(run_training(s.task, s.mcfg, s.tcfg), ValidationError);
  }
  SUBCASE("two streams need translation") {
    s.mcfg.stack.kind = ModelKind::kEncoderDecoder;
    s.mcfg.stack.n_enc = 2;
    s.mcfg.stack.n_dec = 2;
    CHECK_THROWS_AS(run_training(s.task, s.mcfg, s.tcfg), ValidationError);
  }
  SUBCASE("vocabularies must agree") {
    s.mcfg.vocab = s.task.vocab + 1;
    CHECK_THROWS_AS(run_training(s.task, s.mcfg, s.tcfg), ValidationError);
  }
  SUBCASE("splits must divide into batches") {
    s.tcfg.batch_size = 5;
    CHECK_THROWS_AS(run_training(s.task, s.mcfg, s.tcfg), ValidationError);
  }
  SUBCASE("sequences must fit the position table") {
    s.task.seq_len = 9;
    CHECK_THROWS_AS(run_training(s.task, s.mcfg, s.tcfg), ValidationError);
  }
}

TEST_CASE("gradient check is tight and catches a planted fault") {
  CHECK(gradient_check(3) < 1e-5);
  CHECK(gradient_check(1, true) > 1e-5);
}

TEST_CASE("self-check suite passes and renders one line per check") {
  const auto checks = verify_suite(2);
  REQUIRE(checks.size() == 5);
  for (const VerifyCheck& c : checks) {
    INFO(c.name, " value=", c.value, " bound=", c.bound);
    CHECK(c.pass);
  }
  const std::string report = verify_report(checks);
  CHECK(report.find("FAIL") == std::string::npos);
  CHECK(report.find("fixed_point") != std::string::npos);
  CHECK(report.find("finite_termination") != std::string::npos);
}

TEST_SUITE_END();

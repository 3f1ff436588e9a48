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
#include "mglp/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <utility>

#include "mglp/checkpoint.hpp"
#include "mglp/errors.hpp"
#include "mglp/executor.hpp"
#include "mglp/mgrit.hpp"
#include "mglp/rng.hpp"
#include "mglp/systems.hpp"

namespace mglp {

const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kSerial: return "serial";
    case TrainMode::kLayerParallel: return "layer_parallel";
    case TrainMode::kSwitching: return "switching";
  }
  return "?";
}

namespace {

const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kEncoder: return "encoder";
    case ModelKind::kDecoderOnly: return "decoder_only";
    case ModelKind::kEncoderDecoder: return "encoder_decoder";
  }
  return "?";
}

const char* opt_name(OptKind k) {
  switch (k) {
    case OptKind::kSgd: return "sgd";
    case OptKind::kAdam: return "adam";
    case OptKind::kAdamW: return "adamw";
  }
  return "?";
}

bool bits_equal(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

// Everything one run owns. Also the vehicle for replaying a captured
// handover: resume_serial() loads the checkpoint into the same machinery and
// walks the identical per-batch code path, minus the engine.
class Trainer {
 public:
  Trainer(const TaskSpec& task, const ModelConfig& mcfg,
          const TrainConfig& tcfg)
      : task_(task),
        tcfg_(tcfg),
        ex_(std::max(1, tcfg.workers)),
        model_(mcfg, tcfg.seed),
        opt_(tcfg.opt),
        mon_(tcfg.indicator) {
    validate(task, mcfg, tcfg);
    opt_.attach(model_.param_tensors());
    if (tcfg_.mode != TrainMode::kSerial)
      engine_.emplace(model_.stack(), ex_, tcfg_.solve);
    batches_per_epoch_ = task_.train_size / tcfg_.batch_size;
    total_batches_ =
        static_cast<long long>(tcfg_.epochs) * batches_per_epoch_;
    echo_ = config_echo(task_, mcfg, tcfg_);
  }

  TrainResult run() {
    TrainResult res;
    bool serial_now = tcfg_.mode == TrainMode::kSerial;
    const bool monitored = tcfg_.mode == TrainMode::kSwitching;
    double val = 0.0;
    bool have_val = false;

    for (long long k = 0; k < total_batches_; ++k) {
      if (!serial_now && tcfg_.manual_switch_batch >= 0 &&
          k == tcfg_.manual_switch_batch) {
        res.switch_state = capture(k);
        res.switched = true;
        res.switch_batch = k;
        serial_now = true;
      }

      MetricsRow row;
      row.batch = k;
      row.mode = serial_now ? "serial" : "layer_parallel";

      if (serial_now) {
        row.loss = run_update(k, false, nullptr, nullptr, true);
      } else if (monitored && mon_.due(k)) {
        probe_batch(k, row, res);
        if (mon_.switched() && !res.switched) {
          res.switch_state = capture(k + 1);
          res.switched = true;
          res.switch_batch = k + 1;
          serial_now = true;
        }
      } else {
        std::vector<double> ftr, btr;
        row.fwd_iters = engine_->config().fwd_iters;
        row.bwd_iters = engine_->config().bwd_iters;
        row.loss = run_update(k, true, &ftr, &btr, true);
        row.fwd_factor = last_pair_factor(ftr);
        row.bwd_factor = last_pair_factor(btr);
      }

      if (!have_val || k % tcfg_.val_every == 0 || k == total_batches_ - 1) {
        val = evaluate();
        have_val = true;
      }
      row.val_metric = val;
      res.rows.push_back(std::move(row));
    }

    res.reports = mon_.reports();
    res.final_val = val;
    res.csv = metrics_csv(res.rows);
    res.final_state = capture(total_batches_);
    return res;
  }

  // Loads a captured handover and finishes the run on the serial path.
  TrainResult resume_serial(const std::string& blob) {
    std::istringstream is(blob);
    const CheckpointMeta meta = load_checkpoint(is, model_, &opt_);
    if (meta.config_echo != echo_)
      throw ValidationError("resume: checkpoint belongs to a different run");
    TrainResult res;
    for (long long k = meta.batch; k < total_batches_; ++k) {
      MetricsRow row;
      row.batch = k;
      row.mode = "serial";
      row.loss = run_update(k, false, nullptr, nullptr, true);
      res.rows.push_back(std::move(row));
    }
    res.final_state = capture(total_batches_);
    return res;
  }

  // Seeds parameters (and optimizer slots, when stored) before batch 0.
  void load_start(const std::string& blob) {
    std::istringstream is(blob);
    const CheckpointMeta meta = load_checkpoint(is, model_, &opt_);
    if (meta.config_echo != echo_)
      throw ValidationError("train: start checkpoint belongs to a different run");
    if (meta.batch != 0)
      throw ValidationError("train: start checkpoint is mid-run; resume instead");
  }

  long long total_batches() const { return total_batches_; }

 private:
  static void validate(const TaskSpec& task, const ModelConfig& mcfg,
                       const TrainConfig& tcfg) {
    if (tcfg.batch_size < 1)
      throw ValidationError("train: batch_size must be >= 1");
    if (tcfg.epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (tcfg.val_every < 1)
      throw ValidationError("train: val_every must be >= 1");
    if (tcfg.workers < 1) throw ValidationError("train: workers must be >= 1");
    if (task.vocab != mcfg.vocab)
      throw ValidationError("train: task and model vocabularies differ");
    if (task.seq_len > mcfg.max_seq)
      throw ValidationError("train: sequence longer than the position table");
    const bool wants_two_stream = task.kind == TaskKind::kTinyTranslation;
    if (wants_two_stream !=
        (mcfg.stack.kind == ModelKind::kEncoderDecoder)) {
      throw ValidationError(
          "train: translation needs an encoder-decoder model, and only "
          "translation feeds one");
    }
    if (task.train_size % tcfg.batch_size != 0 ||
        task.val_size % tcfg.batch_size != 0) {
      throw ValidationError(
          "train: split sizes must be divisible by batch_size");
    }
  }

  // One optimizer step worth of work; the probe path reuses it with
  // apply=false to measure without touching the parameters.
  double run_update(long long k, bool parallel, std::vector<double>* ftr,
                    std::vector<double>* btr, bool apply) {
    const TokenBatch b =
        make_batch(task_, 0, k * tcfg_.batch_size, tcfg_.batch_size);
    const int s_y = model_.two_stream() ? b.seq : 0;
    model_.stack().refresh_dropout(tcfg_.seed, static_cast<std::uint64_t>(k),
                                   b.batch, b.seq, s_y);
    const State z0 = model_.embed(b);

    std::vector<State> traj;
    if (parallel) {
      ForwardOutcome out = engine_->forward(z0);
      traj = std::move(out.traj);
      if (ftr) *ftr = std::move(out.phase.trace);
    } else {
      traj = serial_forward(model_.stack(), z0);
    }

    const Tensor lg = model_.logits(traj.back());
    Model::LossGrad ce = Model::cross_entropy(lg, b.tgt_out);
    ModelGrads grads = model_.zero_grads();
    const State lam_term = model_.head_backward(traj.back(), ce.dlogits, &grads);

    State lam0;
    if (parallel) {
      BackwardOutcome bo = engine_->backward(traj, lam_term, &grads.stack);
      lam0 = std::move(bo.lambda0);
      if (btr) *btr = std::move(bo.phase.trace);
    } else {
      std::vector<State> lams =
          serial_adjoint(model_.stack(), traj, lam_term, &grads.stack);
      lam0 = std::move(lams.front());
    }
    model_.embed_backward(b, lam0, &grads);

    if (apply) opt_.step(model_.param_tensors(), model_.grad_tensors(grads));
    return ce.loss;
  }

  // Indicator probe at batch k. With use_probe_gradient the doubled run IS
  // the update; otherwise it is measurement-only behind a warm-state
  // snapshot and the nominal update follows at the adjusted budget.
  void probe_batch(long long k, MetricsRow& row, TrainResult&) {
    std::vector<double> ftr, btr;
    if (tcfg_.indicator.use_probe_gradient) {
      {
        ProbeScope scope(engine_->config());
        row.fwd_iters = engine_->config().fwd_iters;
        row.bwd_iters = engine_->config().bwd_iters;
        row.loss = run_update(k, true, &ftr, &btr, true);
      }
      const IndicatorReport rep =
          mon_.record(k, last_pair_factor(ftr), last_pair_factor(btr),
                      engine_->config());
      row.fwd_factor = rep.fwd_factor;
      row.bwd_factor = rep.bwd_factor;
      return;
    }
    const LayerParallelEngine::WarmSnapshot snap = engine_->snapshot();
    {
      ProbeScope scope(engine_->config());
      run_update(k, true, &ftr, &btr, false);
    }
    engine_->restore(snap);
    const IndicatorReport rep = mon_.record(
        k, last_pair_factor(ftr), last_pair_factor(btr), engine_->config());
    row.fwd_factor = rep.fwd_factor;
    row.bwd_factor = rep.bwd_factor;
    std::vector<double> nf, nb;
    row.fwd_iters = engine_->config().fwd_iters;
    row.bwd_iters = engine_->config().bwd_iters;
    row.loss = run_update(k, true, &nf, &nb, true);
  }

  // Held-out token accuracy on the exact map. Pure read: parameters and the
  // solver warm states are untouched, and the next batch refreshes dropout.
  double evaluate() {
    model_.stack().clear_dropout();
    const int vb = task_.val_size / tcfg_.batch_size;
    double acc = 0.0;
    for (int i = 0; i < vb; ++i) {
      const TokenBatch b = make_batch(
          task_, 1, static_cast<long long>(i) * tcfg_.batch_size,
          tcfg_.batch_size);
      const State z0 = model_.embed(b);
      const std::vector<State> traj = serial_forward(model_.stack(), z0);
      acc += model_.accuracy(model_.logits(traj.back()), b.tgt_out);
    }
    return acc / vb;
  }

  std::string capture(long long next_batch) {
    std::ostringstream os;
    save_checkpoint(os, model_, &opt_, next_batch, echo_);
    return os.str();
  }

  TaskSpec task_;
  TrainConfig tcfg_;
  Executor ex_;
  Model model_;
  Optimizer opt_;
  InexactnessMonitor mon_;
  std::optional<LayerParallelEngine> engine_;
  long long batches_per_epoch_ = 0;
  long long total_batches_ = 0;
  std::string echo_;
};

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "batch, loss, val_metric, mode, fwd_iters, bwd_iters, fwd_factor, "
      "bwd_factor\n";
  char buf[256];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld, %.17g, %.17g, %s, %d, %d, %.17g, %.17g\n",
                  r.batch, r.loss, r.val_metric, r.mode.c_str(), r.fwd_iters,
                  r.bwd_iters, r.fwd_factor, r.bwd_factor);
    out += buf;
  }
  return out;
}

std::string config_echo(const TaskSpec& task, const ModelConfig& mcfg,
                        const TrainConfig& tcfg) {
  char buf[512];
  std::snprintf(
      buf, sizeof(buf),
      "task=%s vocab=%d seq=%d train=%d val=%d data_seed=%llu | kind=%s d=%d "
      "heads=%d ffn=%d enc=%d dec=%d open=%d close=%d dropout=%.17g | opt=%s "
      "lr=%.17g wd=%.17g | coarsen=%d levels=%d | batch=%d epochs=%d "
      "seed=%llu",
      task_name(task.kind), task.vocab, task.seq_len, task.train_size,
      task.val_size, static_cast<unsigned long long>(task.seed),
      kind_name(mcfg.stack.kind), mcfg.stack.d, mcfg.stack.heads,
      mcfg.stack.ffn, mcfg.stack.n_enc, mcfg.stack.n_dec,
      mcfg.stack.buffer_open, mcfg.stack.buffer_close, mcfg.stack.dropout,
      opt_name(tcfg.opt.kind), tcfg.opt.lr, tcfg.opt.weight_decay,
      tcfg.solve.coarsen, tcfg.solve.levels, tcfg.batch_size, tcfg.epochs,
      static_cast<unsigned long long>(tcfg.seed));
  return buf;
}

TrainResult run_training(const TaskSpec& task, const ModelConfig& mcfg,
                         const TrainConfig& tcfg) {
  Trainer t(task, mcfg, tcfg);
  return t.run();
}

TrainResult run_training(const TaskSpec& task, const ModelConfig& mcfg,
                         const TrainConfig& tcfg,
                         const std::string& start_state) {
  Trainer t(task, mcfg, tcfg);
  if (!start_state.empty()) t.load_start(start_state);
  return t.run();
}

ReplayOutcome switching_replay(const TaskSpec& task, const ModelConfig& mcfg,
                               const TrainConfig& tcfg) {
  return switching_replay(task, mcfg, tcfg, std::string());
}

ReplayOutcome switching_replay(const TaskSpec& task, const ModelConfig& mcfg,
                               const TrainConfig& tcfg,
                               const std::string& start_state) {
  const TrainResult first = run_training(task, mcfg, tcfg, start_state);
  ReplayOutcome out;
  out.switched = first.switched;
  out.switch_batch = first.switch_batch;
  if (!first.switched) return out;

  Trainer tail(task, mcfg, tcfg);
  const TrainResult second = tail.resume_serial(first.switch_state);
  out.compared_batches = static_cast<long long>(second.rows.size());

  bool losses_ok = true;
  for (const MetricsRow& r : second.rows) {
    const auto idx = static_cast<std::size_t>(r.batch);
    if (idx >= first.rows.size() ||
        !bits_equal(first.rows[idx].loss, r.loss)) {
      losses_ok = false;
      break;
    }
  }
  out.losses_match = losses_ok;
  out.state_matches = first.final_state == second.final_state;
  return out;
}

// ---- self-checks ------------------------------------------------------------

double gradient_check(const TaskSpec& task, const ModelConfig& mcfg,
                      std::uint64_t model_seed, int directions, double step,
                      bool sabotage) {
  if (directions < 1)
    throw ValidationError("gradient_check: directions must be >= 1");
  if (step <= 0.0)
    throw ValidationError("gradient_check: step must be positive");
  Model model(mcfg, model_seed);
  model.stack().clear_dropout();
  const TokenBatch b = make_batch(task, 0, 0, 4);

  const auto loss_at = [&]() {
    const State z0 = model.embed(b);
    const std::vector<State> traj = serial_forward(model.stack(), z0);
    return Model::cross_entropy(model.logits(traj.back()), b.tgt_out).loss;
  };

  ModelGrads grads = model.zero_grads();
  {
    const State z0 = model.embed(b);
    const std::vector<State> traj = serial_forward(model.stack(), z0);
    Model::LossGrad ce =
        Model::cross_entropy(model.logits(traj.back()), b.tgt_out);
    const State lam_term =
        model.head_backward(traj.back(), ce.dlogits, &grads);
    const std::vector<State> lams =
        serial_adjoint(model.stack(), traj, lam_term, &grads.stack);
    model.embed_backward(b, lams.front(), &grads);
  }
  const std::vector<Tensor*> params = model.param_tensors();
  const std::vector<const Tensor*> gt = model.grad_tensors(grads);

  std::vector<Tensor> base;
  base.reserve(params.size());
  for (const Tensor* p : params) base.push_back(*p);

  const double eps = step;
  double worst = 0.0;
  for (int dir = 0; dir < directions; ++dir) {
    std::vector<Tensor> d;
    d.reserve(params.size());
    double nrm_sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor t = Tensor::zeros_like(*params[i]);
      for (std::size_t e = 0; e < t.size(); ++e) {
        t.data()[e] = rng::gaussian(555, rng::kTestOnly, dir, i, e);
        nrm_sq += t.data()[e] * t.data()[e];
      }
      d.push_back(std::move(t));
    }
    const double inv = 1.0 / std::sqrt(nrm_sq);
    for (Tensor& t : d)
      for (std::size_t e = 0; e < t.size(); ++e) t.data()[e] *= inv;

    double gd = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
      for (std::size_t e = 0; e < d[i].size(); ++e)
        gd += gt[i]->data()[e] * d[i].data()[e];
    if (sabotage && dir == 0) gd = -gd;

    const auto offset = [&](double scale) {
      for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t e = 0; e < params[i]->size(); ++e)
          params[i]->data()[e] = base[i].data()[e] + scale * d[i].data()[e];
    };
    offset(eps);
    const double lp = loss_at();
    offset(-eps);
    const double lm = loss_at();
    offset(0.0);

    const double fd = (lp - lm) / (2.0 * eps);
    const double denom =
        std::max({std::fabs(fd), std::fabs(gd), 1e-12});
    worst = std::max(worst, std::fabs(fd - gd) / denom);
  }
  return worst;
}

double gradient_check(int directions, bool sabotage) {
  TaskSpec task;
  task.vocab = 11;
  task.seq_len = 6;
  task.train_size = 64;
  task.val_size = 16;
  task.seed = 3;
  ModelConfig mcfg;
  mcfg.stack.kind = ModelKind::kEncoder;
  mcfg.stack.d = 8;
  mcfg.stack.heads = 2;
  mcfg.stack.ffn = 12;
  mcfg.stack.n_enc = 6;
  mcfg.vocab = task.vocab;
  mcfg.max_seq = 8;
  return gradient_check(task, mcfg, 17, directions, 1e-6, sabotage);
}

namespace {

VerifyCheck check_fixed_point(int workers) {
  VerifyCheck c;
  c.name = "fixed_point";
  Executor ex(workers);
  StackConfig sc;
  sc.kind = ModelKind::kEncoder;
  sc.d = 8;
  sc.heads = 2;
  sc.ffn = 12;
  sc.n_enc = 16;
  LayerStack stack(sc, 99);
  State z0;
  z0.x = Tensor({2, 4, 8});
  for (std::size_t i = 0; i < z0.x.size(); ++i)
    z0.x.data()[i] = 0.5 * rng::gaussian(31, rng::kTestOnly, 0, i);

  StackForwardSystem sys(stack, 2);
  MgritSolver<StackForwardSystem> solver(sys, 16, 2, 2, ex);
  solver.set_initial_condition(z0);
  solver.apply_initial_guess(InitialGuess::kBroadcast);
  const double cold = solver.fine_residual_norm();

  solver.states(0) = serial_forward(stack, z0);
  const double nrm = solver.v_cycle();
  c.value = nrm;
  c.bound = 1e-12 * cold;
  c.pass = nrm <= c.bound;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "one cycle on the converged states, start residual %.3g", cold);
  c.detail = buf;
  return c;
}

VerifyCheck check_gradient(double tol) {
  VerifyCheck c;
  c.name = "gradient_accuracy";
  c.value = gradient_check(5, false);
  c.bound = tol;
  c.pass = c.value <= tol;
  c.detail = "directional derivatives vs central differences, serial path";
  return c;
}

VerifyCheck check_gradient_fault(double tol) {
  VerifyCheck c;
  c.name = "gradient_fault_detected";
  c.value = gradient_check(1, true);
  c.bound = tol;
  c.pass = c.value > tol;  // the flipped sign must register as an error
  c.detail = "sign-flipped analytic value must fail the same comparison";
  return c;
}

VerifyCheck check_determinism() {
  VerifyCheck c;
  c.name = "determinism";
  TaskSpec task;
  task.vocab = 11;
  task.seq_len = 6;
  task.train_size = 32;
  task.val_size = 16;
  task.seed = 5;
  ModelConfig mcfg;
  mcfg.stack.kind = ModelKind::kEncoder;
  mcfg.stack.d = 8;
  mcfg.stack.heads = 2;
  mcfg.stack.ffn = 12;
  mcfg.stack.n_enc = 8;
  mcfg.vocab = task.vocab;
  mcfg.max_seq = 8;
  TrainConfig tcfg;
  tcfg.mode = TrainMode::kLayerParallel;
  tcfg.batch_size = 8;
  tcfg.epochs = 1;
  tcfg.val_every = 2;
  tcfg.seed = 21;
  tcfg.workers = 1;
  const TrainResult a = run_training(task, mcfg, tcfg);
  tcfg.workers = 2;
  const TrainResult b = run_training(task, mcfg, tcfg);
  const bool same = a.csv == b.csv && a.final_state == b.final_state;
  c.value = same ? 0.0 : 1.0;
  c.bound = 0.0;
  c.pass = same;
  c.detail = "metrics and final state, 1 vs 2 workers";
  return c;
}

VerifyCheck check_termination() {
  VerifyCheck c;
  c.name = "finite_termination";
  Executor ex(1);
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, 64, 1.0, 2);
  const std::vector<double> serial = sys.serial_solution(1.0);
  MgritSolver<ScalarLinearSystem> solver(sys, 64, 2, 2, ex);
  solver.set_initial_condition(1.0);
  solver.apply_initial_guess(InitialGuess::kBroadcast);
  const int bound = (64 / 2 + 1) / 2 + 1;
  int reached = -1;
  for (int cycle = 1; cycle <= bound; ++cycle) {
    solver.v_cycle();
    bool equal = true;
    for (std::size_t j = 0; j < serial.size(); ++j) {
      if (!bits_equal(solver.states(0)[j], serial[j])) {
        equal = false;
        break;
      }
    }
    if (equal) {
      reached = cycle;
      break;
    }
  }
  c.value = reached;
  c.bound = bound;
  c.pass = reached > 0 && reached <= bound;
  c.detail = "cycles to the exact serial states, two-level dyadic decay";
  return c;
}

}  // namespace

std::vector<VerifyCheck> verify_suite(int workers, const std::string& filter) {
  const double grad_tol = 1e-5;
  struct Item {
    const char* name;
    std::function<VerifyCheck()> run;
  };
  const Item items[] = {
      {"fixed_point", [&] { return check_fixed_point(std::max(1, workers)); }},
      {"gradient_accuracy", [&] { return check_gradient(grad_tol); }},
      {"gradient_fault_detected",
       [&] { return check_gradient_fault(grad_tol); }},
      {"determinism", [&] { return check_determinism(); }},
      {"finite_termination", [&] { return check_termination(); }},
  };
  std::vector<VerifyCheck> checks;
  for (const Item& it : items) {
    if (filter.empty() ||
        std::string(it.name).find(filter) != std::string::npos) {
      checks.push_back(it.run());
    }
  }
  return checks;
}

std::string verify_report(const std::vector<VerifyCheck>& checks) {
  std::string out;
  char buf[256];
  for (const VerifyCheck& c : checks) {
    std::snprintf(buf, sizeof(buf), "%s  %-24s value=%-12.5g bound=%-12.5g %s\n",
                  c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.bound,
                  c.detail.c_str());
    out += buf;
  }
  return out;
}

}  // namespace mglp

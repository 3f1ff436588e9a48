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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mglp/checkpoint.hpp"
#include "mglp/cli_config.hpp"
#include "mglp/controller.hpp"
#include "mglp/errors.hpp"
#include "mglp/executor.hpp"
#include "mglp/lipschitz.hpp"
#include "mglp/mgrit.hpp"
#include "mglp/rng.hpp"
#include "mglp/systems.hpp"
#include "mglp/training.hpp"

namespace fs = std::filesystem;
using namespace mglp;

namespace {

RunSettings load_settings(const std::string& config_path,
                          const std::vector<std::string>& sets) {
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) kv = read_config_file(config_path);
  apply_overrides(kv, sets);
  return materialize(kv);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open " + path.string());
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw ValidationError("write failed for " + path.string());
}

int cmd_train(const RunSettings& s) {
  const fs::path out(s.out);
  fs::create_directories(out);
  const TrainResult res = run_training(s.task, s.model, s.train);

  std::vector<std::string> outputs = {"metrics.csv", "indicator.csv",
                                      "checkpoint.bin"};
  write_file(out / "metrics.csv", res.csv);
  write_file(out / "indicator.csv", indicator_csv(res.reports));
  write_file(out / "checkpoint.bin", res.final_state);
  if (!res.switch_state.empty()) {
    write_file(out / "switch_checkpoint.bin", res.switch_state);
    outputs.push_back("switch_checkpoint.bin");
  }
  outputs.push_back("manifest.txt");
  write_file(out / "manifest.txt", manifest_text("train", s, outputs));

  std::printf("config %s\n", config_hash_hex(s).c_str());
  std::printf("wrote %s\n", out.string().c_str());
  std::printf("batches %zu  final_loss %.17g  final_val %.17g\n",
              res.rows.size(), res.rows.empty() ? 0.0 : res.rows.back().loss,
              res.final_val);
  if (res.switched)
    std::printf("switched to serial at batch %lld\n", res.switch_batch);
  return 0;
}

int cmd_verify(int workers, const std::string& filter) {
  const std::vector<VerifyCheck> checks = verify_suite(workers, filter);
  if (checks.empty()) {
    std::fprintf(stderr, "verify: no checks match filter '%s'\n",
                 filter.c_str());
    return 1;
  }
  std::fputs(verify_report(checks).c_str(), stdout);
  for (const VerifyCheck& c : checks)
    if (!c.pass) return 2;
  return 0;
}

int cmd_bench(const RunSettings& s, const std::string& workers_csv,
              int repeats) {
  std::vector<int> counts;
  std::stringstream ss(workers_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const long n = std::strtol(item.c_str(), &end, 10);
    if (end == item.c_str() || *end != '\0' || n < 1)
      throw ValidationError("bench: bad worker count '" + item + "'");
    counts.push_back(static_cast<int>(n));
  }
  if (counts.empty()) throw ValidationError("bench: empty worker list");
  const unsigned cores = std::thread::hardware_concurrency();
  for (int c : counts) {
    if (cores > 0 && static_cast<unsigned>(c) > cores)
      std::fprintf(stderr,
                   "bench: %d workers exceed the %u hardware threads; timing "
                   "will oversubscribe\n",
                   c, cores);
  }

  Benchmark bench;
  // multilevel forward solve on the configured stack
  {
    const LayerStack stack(s.model.stack, s.train.seed);
    State z0;
    const int d = s.model.stack.d;
    z0.x = Tensor({4, static_cast<std::size_t>(s.task.seq_len),
                   static_cast<std::size_t>(d)});
    for (std::size_t i = 0; i < z0.x.size(); ++i)
      z0.x.data()[i] = 0.5 * rng::gaussian(s.train.seed, rng::kTestOnly, 7, i);
    if (s.model.stack.kind == ModelKind::kEncoderDecoder) {
      z0.y = z0.x;
    }
    const SolveConfig& g = s.train.solve;
    bench.measure("stack_forward", counts, repeats, [&](Executor& ex) {
      StackForwardSystem sys(stack, g.coarsen);
      MgritSolver<StackForwardSystem> solver(sys, stack.interior_layers(),
                                             g.coarsen, g.levels, ex);
      solver.set_initial_condition(z0);
      solver.apply_initial_guess(InitialGuess::kBroadcast);
      solver.solve_forward(g.fwd_iters, 0.0);
    });
  }
  // relaxation sweeps on a deep scalar chain, the pure-overhead probe
  {
    const int n = 256;
    ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, n, 1.0, 2);
    bench.measure("scalar_fcf", counts, repeats, [&](Executor& ex) {
      MgritSolver<ScalarLinearSystem> solver(sys, n, 2, 2, ex);
      solver.set_initial_condition(1.0);
      solver.apply_initial_guess(InitialGuess::kBroadcast);
      for (int sweep = 0; sweep < 200; ++sweep) solver.fcf_relax(0);
    });
  }

  const fs::path out(s.out);
  fs::create_directories(out);
  const std::string csv = bench.to_csv();
  write_file(out / "benchmark.csv", csv);
  write_file(out / "manifest.txt",
             manifest_text("bench", s, {"benchmark.csv", "manifest.txt"}));
  std::fputs(csv.c_str(), stdout);
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int cmd_probe(const RunSettings& s, const std::string& checkpoint_path,
              int samples) {
  Model model(s.model, s.train.seed);
  if (!checkpoint_path.empty())
    load_checkpoint_file(checkpoint_path, model, nullptr);

  ProbeConfig pc;
  pc.samples = samples;
  pc.seq_len = s.task.seq_len;
  Executor ex(std::max(1, s.train.workers));
  const std::vector<LipschitzEstimate> estimates =
      estimate_stack(model.stack(), pc, s.train.seed, &ex);
  const BufferRecommendation rec =
      recommend_buffers(estimates, model.stack());

  const fs::path out(s.out);
  fs::create_directories(out);
  write_file(out / "lipschitz.csv", lipschitz_csv(estimates, model.stack()));
  char plan[160];
  std::snprintf(plan, sizeof(plan),
                "k_open=%d\nk_close=%d\namp_threshold=%.17g\n", rec.k_open,
                rec.k_close, rec.amp_threshold);
  write_file(out / "buffer_plan.txt", plan);
  write_file(out / "manifest.txt",
             manifest_text("probe", s,
                           {"lipschitz.csv", "buffer_plan.txt",
                            "manifest.txt"}));
  std::printf("probed %d layers, %d samples each\n",
              static_cast<int>(estimates.size()), samples);
  std::fputs(plan, stdout);
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layer-parallel training tools"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string workers_csv = "1,2,4";
  std::string filter;
  std::string checkpoint_path;
  int verify_workers = 2;
  int repeats = 5;
  int samples = 1000;

  CLI::App* train = app.add_subcommand("train", "run a training job");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--set", sets, "override, key=value (repeatable)");

  CLI::App* verify = app.add_subcommand("verify", "run the self-check suite");
  verify->add_option("--workers", verify_workers, "worker threads");
  verify->add_option("--filter", filter, "run only checks whose name contains this");

  CLI::App* bench = app.add_subcommand("bench", "time solves across worker counts");
  bench->add_option("--config", config_path, "key=value config file");
  bench->add_option("--set", sets, "override, key=value (repeatable)");
  bench->add_option("--workers", workers_csv, "comma-separated worker counts");
  bench->add_option("--repeats", repeats, "timed passes per worker count");

  CLI::App* probe = app.add_subcommand("probe", "per-layer stretch estimates");
  probe->add_option("--config", config_path, "key=value config file");
  probe->add_option("--set", sets, "override, key=value (repeatable)");
  probe->add_option("--checkpoint", checkpoint_path, "weights to load first");
  probe->add_option("--samples", samples, "probe samples per layer");

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(load_settings(config_path, sets));
    if (verify->parsed()) return cmd_verify(verify_workers, filter);
    if (bench->parsed())
      return cmd_bench(load_settings(config_path, sets), workers_csv, repeats);
    if (probe->parsed())
      return cmd_probe(load_settings(config_path, sets), checkpoint_path,
                       samples);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ContractViolation& e) {
    std::fprintf(stderr, "invariant violated: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fatal: %s\n", e.what());
    return 2;
  }
}

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
#ifndef MGLP_EXECUTOR_HPP_
#define MGLP_EXECUTOR_HPP_

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mglp/errors.hpp"

namespace mglp {

// One unit of relaxation work. [write_begin, write_end) is the state-index
// range the task mutates; the executor rejects overlapping ranges before
// running anything.
struct ChunkTask {
  std::size_t write_begin = 0;
  std::size_t write_end = 0;
  std::function<void()> fn;
};

// Fork-join worker pool. Tasks within one run() are claimed dynamically, which
// is safe because tasks never alias: the result is the same bitwise whatever
// the schedule, so worker count never changes solver output.
class Executor {
 public:
  explicit Executor(int workers);
  ~Executor();
  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  int workers() const { return workers_; }

  // Runs all tasks and waits for completion. Throws ContractViolation if any
  // two non-empty write ranges overlap; rethrows the first task exception.
  void run(std::vector<ChunkTask>& tasks);

  // Convenience for index-parallel loops with per-index write ranges derived
  // by the caller.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

 private:
  void worker_loop();
  void execute_batch();

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_start_;
  std::condition_variable cv_done_;
  std::vector<ChunkTask>* batch_ = nullptr;
  std::size_t next_task_ = 0;
  std::size_t remaining_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr first_error_;
};

// Contiguous balanced split of layers 0..n_layers-1 over P workers; the first
// n_layers % P ranges are one longer.
struct LayerPartition {
  int workers = 1;
  std::vector<std::pair<int, int>> ranges;  // [begin, end) per worker
};

LayerPartition partition_layers(int n_layers, int workers, int coarsen = 1);

// Wall-clock comparison table across worker counts. Accuracy is asserted
// elsewhere; this only reports medians.
struct BenchmarkEntry {
  int workers = 1;
  std::string phase;
  double median_ms = 0.0;
  double speedup = 1.0;
};

class Benchmark {
 public:
  // Runs fn once to warm up, then `repeats` timed passes per worker count.
  // Speedup is the single-worker median over this worker count's median.
  void measure(const std::string& phase, const std::vector<int>& worker_counts,
               int repeats, const std::function<void(Executor&)>& fn);
  const std::vector<BenchmarkEntry>& entries() const { return entries_; }
  std::string to_csv() const;

 private:
  std::vector<BenchmarkEntry> entries_;
};

}  // namespace mglp

#endif  // MGLP_EXECUTOR_HPP_

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
#include "mglp/executor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace mglp {

Executor::Executor(int workers) : workers_(workers) {
  if (workers < 1) throw ValidationError("Executor: worker count must be >= 1");
  threads_.reserve(workers - 1);
  for (int i = 0; i < workers - 1; ++i)
    threads_.emplace_back([this] { worker_loop(); });
}

Executor::~Executor() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_start_.notify_all();
  for (std::thread& t : threads_) t.join();
}

void Executor::worker_loop() {
  std::uint64_t seen = 0;
  for (;;) {
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_start_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
    }
    execute_batch();
  }
}

void Executor::execute_batch() {
  for (;;) {
    std::size_t idx;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (batch_ == nullptr || next_task_ >= batch_->size()) break;
      idx = next_task_++;
    }
    try {
      (*batch_)[idx].fn();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!first_error_) first_error_ = std::current_exception();
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (--remaining_ == 0) cv_done_.notify_all();
    }
  }
}

void Executor::run(std::vector<ChunkTask>& tasks) {
  // validate disjointness before any task runs
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  spans.reserve(tasks.size());
  for (const ChunkTask& t : tasks)
    if (t.write_begin < t.write_end) spans.emplace_back(t.write_begin, t.write_end);
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) {
      char buf[128];
      std::snprintf(buf, sizeof(buf),
                    "Executor: overlapping write ranges [%zu,%zu) and [%zu,%zu)",
                    spans[i - 1].first, spans[i - 1].second, spans[i].first,
                    spans[i].second);
      throw ContractViolation(buf);
    }
  }
  if (tasks.empty()) return;

  {
    std::lock_guard<std::mutex> lock(mu_);
    batch_ = &tasks;
    next_task_ = 0;
    remaining_ = tasks.size();
    first_error_ = nullptr;
    ++generation_;
  }
  cv_start_.notify_all();
  execute_batch();  // the caller participates
  {
    std::unique_lock<std::mutex> lock(mu_);
    cv_done_.wait(lock, [&] { return remaining_ == 0; });
    batch_ = nullptr;
    if (first_error_) std::rethrow_exception(first_error_);
  }
}

void Executor::parallel_for(std::size_t n,
                            const std::function<void(std::size_t)>& fn) {
  std::vector<ChunkTask> tasks(n);
  for (std::size_t i = 0; i < n; ++i) {
    tasks[i].write_begin = i;
    tasks[i].write_end = i + 1;
    tasks[i].fn = [i, &fn] { fn(i); };
  }
  run(tasks);
}

LayerPartition partition_layers(int n_layers, int workers, int coarsen) {
  if (n_layers < 1) throw ValidationError("partition_layers: need at least one layer");
  if (coarsen < 1) throw ValidationError("partition_layers: coarsening must be >= 1");
  if (workers < 1 || workers > n_layers / coarsen)
    throw ValidationError("partition_layers: worker count must be in [1, layers/coarsen]");
  LayerPartition part;
  part.workers = workers;
  const int base = n_layers / workers;
  const int extra = n_layers % workers;
  int begin = 0;
  for (int w = 0; w < workers; ++w) {
    int len = base + (w < extra ? 1 : 0);
    part.ranges.emplace_back(begin, begin + len);
    begin += len;
  }
  return part;
}

void Benchmark::measure(const std::string& phase,
                        const std::vector<int>& worker_counts, int repeats,
                        const std::function<void(Executor&)>& fn) {
  if (repeats < 1) throw ValidationError("Benchmark: repeats must be >= 1");
  double base_median = 0.0;
  bool first_count = true;
  for (int wc : worker_counts) {
    Executor ex(wc);
    fn(ex);  // warm-up, untimed
    std::vector<double> times;
    times.reserve(repeats);
    for (int r = 0; r < repeats; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      fn(ex);
      auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    double median = times[times.size() / 2];
    if (times.size() % 2 == 0)
      median = 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
    BenchmarkEntry e;
    e.workers = wc;
    e.phase = phase;
    e.median_ms = median;
    if (first_count) {
      base_median = median;
      first_count = false;
    }
    e.speedup = median > 0.0 ? base_median / median : 1.0;
    entries_.push_back(e);
  }
}

std::string Benchmark::to_csv() const {
  std::ostringstream os;
  os << "workers, phase, median_ms, speedup\n";
  for (const BenchmarkEntry& e : entries_) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d, %s, %.3f, %.3f\n", e.workers,
                  e.phase.c_str(), e.median_ms, e.speedup);
    os << buf;
  }
  return os.str();
}

}  // namespace mglp

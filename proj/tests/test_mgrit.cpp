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
#include <vector>

#include "doctest.h"
#include "mglp/executor.hpp"
#include "mglp/mgrit.hpp"
#include "mglp/rng.hpp"
#include "mglp/systems.hpp"
#include "test_util.hpp"

namespace mglp {
namespace {

using Solver = MgritSolver<ScalarLinearSystem>;
using testutil::rel_err;

TEST_SUITE_BEGIN("mgrit");

bool states_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// Largest index j such that v[0..j] matches the reference bitwise.
int exact_prefix(const std::vector<double>& v, const std::vector<double>& ref) {
  int j = -1;
  while (j + 1 < static_cast<int>(v.size()) && v[j + 1] == ref[j + 1]) ++j;
  return j;
}

TEST_CASE("serial solution equals sequential Euler products bitwise") {
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, 64, 1.0, 2);
  std::vector<double> got = sys.serial_solution(1.0);
  double z = 1.0;
  for (int j = 0; j <= 64; ++j) {
    CHECK(got[j] == z);
    z = z + 1.0 * (-0.5) * z;
  }

  std::vector<double> rates;
  for (int j = 0; j < 8; ++j)
    rates.push_back(-0.9 + 0.1 * rng::u01(rng::derive(5, rng::kTestOnly, j)));
  ScalarLinearSystem varied(rates, 0.25, 2);
  std::vector<double> gv = varied.serial_solution(2.0);
  double w = 2.0;
  for (int j = 0; j < 8; ++j) {
    w = w + 0.25 * rates[j] * w;
    CHECK(gv[j + 1] == w);
  }
}

TEST_CASE("construction validates divisibility and depth") {
  Executor ex(1);
  ScalarLinearSystem s8 = ScalarLinearSystem::uniform(-0.5, 8, 1.0, 2);
  Solver ok(s8, 8, 2, 2, ex);
  CHECK(ok.n_steps(0) == 8);
  CHECK(ok.n_steps(1) == 4);

  ScalarLinearSystem s8w = ScalarLinearSystem::uniform(-0.5, 8, 1.0, 8);
  Solver wide(s8w, 8, 8, 2, ex);
  CHECK(wide.n_steps(1) == 1);  // single coarse step is allowed

  ScalarLinearSystem s12 = ScalarLinearSystem::uniform(-0.5, 12, 1.0, 8);
  CHECK_THROWS_AS(Solver(s12, 12, 8, 2, ex), ValidationError);
  CHECK_THROWS_AS(Solver(s8, 8, 2, 5, ex), ValidationError);  // 2^4 > 8
  CHECK_THROWS_AS(Solver(s8, 8, 1, 2, ex), ValidationError);
  CHECK_THROWS_AS(Solver(s8, 8, 2, 0, ex), ValidationError);
}

TEST_CASE("f_relax recomputes fine points from coarse seeds") {
  Executor ex(1);
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, 8, 1.0, 2);
  std::vector<double> serial = sys.serial_solution(1.0);
  Solver solver(sys, 8, 2, 2, ex);
  std::vector<double>& v = solver.states(0);
  for (int j = 0; j <= 8; ++j) v[j] = (j % 2 == 0) ? serial[j] : 99.0;
  solver.f_relax(0);
  for (int j = 0; j <= 8; ++j) CHECK(v[j] == serial[j]);

  // a single coarse interval is the whole-range serial sweep
  ScalarLinearSystem one = ScalarLinearSystem::uniform(-0.3, 4, 1.0, 4);
  std::vector<double> serial1 = one.serial_solution(1.0);
  Solver sv1(one, 4, 4, 2, ex);
  std::vector<double>& w = sv1.states(0);
  w[0] = 1.0;
  for (int j = 1; j <= 4; ++j) w[j] = -7.0;
  sv1.f_relax(0);
  for (int j = 0; j <= 3; ++j) CHECK(w[j] == serial1[j]);
  CHECK(w[4] == -7.0);  // the coarse point is C-relaxation's job
}

TEST_CASE("c_relax advances coarse points from their predecessors") {
  Executor ex(1);
  ScalarLinearSystem still = ScalarLinearSystem::uniform(0.0, 8, 1.0, 2);
  Solver solver(still, 8, 2, 2, ex);
  std::vector<double>& v = solver.states(0);
  for (int j = 0; j <= 8; ++j) v[j] = 1.0 + j;
  solver.c_relax(0);
  for (int k = 1; k <= 4; ++k) CHECK(v[2 * k] == v[2 * k - 1]);  // identity map
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 2.0);

  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, 8, 1.0, 2);
  std::vector<double> serial = sys.serial_solution(1.0);
  Solver sv(sys, 8, 2, 2, ex);
  std::vector<double>& u = sv.states(0);
  for (int j = 0; j <= 8; ++j) u[j] = (j % 2 == 0) ? serial[j] : 99.0;
  sv.f_relax(0);
  sv.c_relax(0);
  for (int j = 0; j <= 8; ++j) CHECK(u[j] == serial[j]);
}

TEST_CASE("fcf equals its phase composition and fixes the solution") {
  Executor ex(1);
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.4, 16, 1.0, 2);
  std::vector<double> serial = sys.serial_solution(1.0);
  Solver solver(sys, 16, 2, 2, ex);

  std::vector<double>& v = solver.states(0);
  v[0] = 1.0;
  for (int j = 1; j <= 16; ++j)
    v[j] = rng::u01(rng::derive(9, rng::kTestOnly, j));
  std::vector<double> start = v;

  solver.fcf_relax(0);
  std::vector<double> fused = v;

  v = start;
  solver.f_relax(0);
  solver.c_relax(0);
  solver.f_relax(0);
  CHECK(states_equal(fused, v));

  v = serial;
  solver.fcf_relax(0);
  CHECK(states_equal(v, serial));
}

TEST_CASE("relaxation results do not depend on worker count") {
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.45, 32, 1.0, 2);
  std::vector<std::vector<double>> results;
  std::vector<std::vector<double>> traces;
  for (int workers : {1, 2, 4}) {
    Executor ex(workers);
    Solver solver(sys, 32, 2, 2, ex);
    solver.set_initial_condition(1.0);
    solver.apply_initial_guess(InitialGuess::kBroadcast);
    Solver::Result r = solver.solve_forward(5, 0.0);
    results.push_back(solver.states(0));
    traces.push_back(r.trace);
  }
  CHECK(states_equal(results[0], results[1]));
  CHECK(states_equal(results[0], results[2]));
  CHECK(states_equal(traces[0], traces[1]));
  CHECK(states_equal(traces[0], traces[2]));
}

TEST_CASE("residual vanishes at the solution and localizes a perturbation") {
  Executor ex(2);
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, 8, 1.0, 2);
  std::vector<double> serial = sys.serial_solution(1.0);
  Solver solver(sys, 8, 2, 2, ex);
  solver.states(0) = serial;

  std::vector<double> rows = solver.residual_rows(0);
  for (double r : rows) CHECK(r == 0.0);
  CHECK(solver.norm_of(rows) == 0.0);

  const double delta = 1e-3;
  const int j0 = 5;
  solver.states(0)[j0] = serial[j0] + delta;
  rows = solver.residual_rows(0);
  for (int j = 0; j <= 8; ++j) {
    if (j == j0) {
      // the equation for the bumped state misses by exactly the bump
      CHECK(rows[j] == serial[j0] - (serial[j0] + delta));
    } else if (j == j0 + 1) {
      double prop = (serial[j0] + delta) + 1.0 * (-0.5) * (serial[j0] + delta);
      CHECK(rows[j] == prop - serial[j0 + 1]);
    } else {
      CHECK(rows[j] == 0.0);
    }
  }
}

TEST_CASE("injection restriction keeps every coarse-aligned row") {
  Executor ex(1);
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, 8, 1.0, 2);
  Solver solver(sys, 8, 2, 2, ex);
  std::vector<double>& v = solver.states(0);
  for (int j = 0; j <= 8; ++j) v[j] = 100.0 + j;

  std::vector<double> rows(9);
  for (int j = 0; j <= 8; ++j) rows[j] = static_cast<double>(j);
  solver.restrict_to(1, rows);

  REQUIRE(solver.rhs(1).size() == 5);
  for (int k = 0; k <= 4; ++k) {
    CHECK(solver.rhs(1)[k] == 2.0 * k);       // rows 0,2,4,6,8
    CHECK(solver.base(1)[k] == 100.0 + 2 * k);
    CHECK(solver.states(1)[k] == solver.base(1)[k]);
  }
}

TEST_CASE("coarsest solve matches dense forward substitution") {
  Executor ex(1);
  const double lam = -0.35, h = 1.0;
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(lam, 8, h, 2);
  Solver solver(sys, 8, 2, 2, ex);
  solver.set_initial_condition(1.0);
  solver.apply_initial_guess(InitialGuess::kBroadcast);
  solver.fcf_relax(0);
  std::vector<double> rows = solver.residual_rows(0);
  solver.restrict_to(1, rows);
  solver.exact_solve(1);

  // dense oracle on the error: e[0] = rho[0], e[k] = alpha e[k-1] + rho[k]
  const double alpha = 1.0 + 2.0 * h * lam;
  long double e = solver.rhs(1)[0];
  for (int k = 0; k <= 4; ++k) {
    if (k > 0) e = alpha * e + static_cast<long double>(solver.rhs(1)[k]);
    double got = solver.states(1)[k] - solver.base(1)[k];
    CHECK(rel_err(got, static_cast<double>(e)) < 1e-13);
  }
}

TEST_CASE("v_cycle leaves the exact solution untouched at every depth") {
  for (int levels : {2, 3}) {
    Executor ex(2);
    ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, 64, 1.0, 2);
    std::vector<double> serial = sys.serial_solution(1.0);
    Solver solver(sys, 64, 2, levels, ex);
    solver.states(0) = serial;
    double nrm = solver.v_cycle();
    CHECK(nrm == 0.0);
    CHECK(states_equal(solver.states(0), serial));
  }
}

TEST_CASE("residual norms contract monotonically on a stable problem") {
  Executor ex(1);
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.25, 16, 1.0, 2);
  Solver solver(sys, 16, 2, 2, ex);
  solver.set_initial_condition(1.0);
  solver.apply_initial_guess(InitialGuess::kBroadcast);
  Solver::Result res = solver.solve_forward(8, 0.0);
  REQUIRE(res.trace.size() >= 3);
  for (std::size_t i = 1; i < res.trace.size(); ++i) {
    if (res.trace[i - 1] > 1e-14 * res.trace[0])
      CHECK(res.trace[i] < res.trace[i - 1]);
  }
}

TEST_CASE("relaxation-only front advances one coarse interval per sweep") {
  for (int cf : {2, 4}) {
    Executor ex(1);
    ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, 64, 1.0, cf);
    std::vector<double> serial = sys.serial_solution(1.0);
    Solver solver(sys, 64, cf, 2, ex);
    solver.set_initial_condition(1.0);
    solver.apply_initial_guess(InitialGuess::kBroadcast);
    for (int sweep = 1; sweep <= 5; ++sweep) {
      solver.fcf_relax(0);
      // the first sweep bootstraps a full F-C-F span; each later sweep extends
      // the exact prefix by exactly one coarse interval
      int want = std::min((sweep + 1) * cf - 1, 64);
      CHECK(exact_prefix(solver.states(0), serial) == want);
    }
  }
}

TEST_CASE("broadcast start reaches the serial solution within the cycle bound") {
  struct Pin {
    int cf;
    int observed;
  };
  for (Pin pin : {Pin{2, 16}, Pin{4, 8}}) {
    Executor ex(2);
    ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.5, 64, 1.0, pin.cf);
    std::vector<double> serial = sys.serial_solution(1.0);
    Solver solver(sys, 64, pin.cf, 2, ex);
    solver.set_initial_condition(1.0);
    solver.apply_initial_guess(InitialGuess::kBroadcast);

    const int n1 = 64 / pin.cf;
    const int bound = (n1 + 1) / 2 + 1;
    int reached = -1;
    for (int cycle = 1; cycle <= bound; ++cycle) {
      solver.v_cycle();
      if (states_equal(solver.states(0), serial)) {
        reached = cycle;
        break;
      }
    }
    CHECK(reached != -1);
    CHECK(reached <= bound);
    CHECK(reached == pin.observed);
  }
}

TEST_CASE("three-level recursion reaches the same solution as two levels") {
  std::vector<std::vector<double>> finals;
  for (int levels : {2, 3}) {
    Executor ex(1);
    ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.25, 16, 1.0, 2);
    Solver solver(sys, 16, 2, levels, ex);
    solver.set_initial_condition(1.0);
    solver.apply_initial_guess(InitialGuess::kBroadcast);
    Solver::Result res = solver.solve_forward(60, 1e-13);
    CHECK(res.converged);
    finals.push_back(solver.states(0));
  }
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.25, 16, 1.0, 2);
  std::vector<double> serial = sys.serial_solution(1.0);
  for (const std::vector<double>& f : finals)
    for (int j = 0; j <= 16; ++j) CHECK(rel_err(f[j], serial[j]) < 1e-10);
}

TEST_CASE("solve_forward honors iteration caps and zero tolerance") {
  Executor ex(1);
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.25, 16, 1.0, 2);
  Solver solver(sys, 16, 2, 2, ex);
  solver.set_initial_condition(1.0);
  solver.apply_initial_guess(InitialGuess::kBroadcast);
  Solver::Result res = solver.solve_forward(2, 0.0);
  CHECK(res.trace.size() == 2);
  CHECK(!res.converged);
  CHECK_THROWS_AS(solver.solve_forward(0, 0.0), ValidationError);
}

TEST_CASE("a frozen network converges in a single cycle") {
  Executor ex(1);
  ScalarLinearSystem still = ScalarLinearSystem::uniform(0.0, 16, 1.0, 2);
  Solver solver(still, 16, 2, 2, ex);
  solver.set_initial_condition(3.0);
  solver.apply_initial_guess(InitialGuess::kBroadcast);
  Solver::Result res = solver.solve_forward(10, 1e-12);
  CHECK(res.converged);
  CHECK(res.trace.size() == 1);
  CHECK(res.trace[0] == 0.0);
}

TEST_CASE("coarse serial solutions are first-order consistent in step size") {
  // halving h should roughly halve the gap between adjacent-level solutions
  auto gap = [](int n) {
    double h = 1.0 / n;
    ScalarLinearSystem fine = ScalarLinearSystem::uniform(-0.5, n, h, 2);
    ScalarLinearSystem coarse =
        ScalarLinearSystem::uniform(-0.5, n / 2, 2.0 * h, 2);
    return std::fabs(fine.serial_solution(1.0).back() -
                     coarse.serial_solution(1.0).back());
  };
  double ratio = gap(256) / gap(512);
  CHECK(ratio > 1.8);
  CHECK(ratio < 2.2);
}

TEST_CASE("initial guess policies seed the fine level as advertised") {
  Executor ex(1);
  ScalarLinearSystem sys = ScalarLinearSystem::uniform(-0.25, 8, 1.0, 2);
  Solver solver(sys, 8, 2, 2, ex);
  solver.set_initial_condition(2.0);
  solver.apply_initial_guess(InitialGuess::kBroadcast);
  for (int j = 0; j <= 8; ++j) CHECK(solver.states(0)[j] == 2.0);

  solver.apply_initial_guess(InitialGuess::kZero);
  CHECK(solver.states(0)[0] == 2.0);
  for (int j = 1; j <= 8; ++j) CHECK(solver.states(0)[j] == 0.0);

  solver.apply_initial_guess(InitialGuess::kBroadcast);
  solver.solve_forward(3, 0.0);
  std::vector<double> after = solver.states(0);
  solver.apply_initial_guess(InitialGuess::kWarmStart);
  CHECK(states_equal(solver.states(0), after));
}

TEST_CASE("convergence factor reads the last residual pair") {
  CHECK(convergence_factor({4.0, 2.0}) == 0.5);
  CHECK(convergence_factor({5.0, 1.0, 0.0}) == 0.0);
  CHECK(convergence_factor({3.0, 0.0, 0.0}) == 0.0);
  CHECK(convergence_factor({1.0, 3.0}) == 3.0);  // > 1 flags a stalled solve
  CHECK_THROWS_AS(convergence_factor({1.0}), ValidationError);
}

TEST_SUITE_END();

}  // namespace
}  // namespace mglp

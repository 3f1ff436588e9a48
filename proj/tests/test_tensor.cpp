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

#include "doctest.h"
#include "mglp/tensor.hpp"
#include "test_util.hpp"

using namespace mglp;
using namespace mglp::testutil;

namespace {

// Reference route: the textbook i-j-k triple loop, written independently of
// the library kernel. The kernel must reproduce it bit for bit.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

// Reference route: layer norm recomputed with two explicit passes.
Tensor oracle_layer_norm(const Tensor& x, const Tensor& g, const Tensor& b,
                         double eps) {
  const std::size_t s = x.dim(0), d = x.dim(1);
  Tensor y({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= double(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= double(d);
    for (std::size_t j = 0; j < d; ++j)
      y(i, j) = g(j) * (x(i, j) - mean) / std::sqrt(var + eps) + b(j);
  }
  return y;
}

// Reference route: softmax accumulated in extended precision.
Tensor oracle_softmax(const Tensor& x) {
  const std::size_t s = x.dim(0), d = x.dim(1);
  Tensor y({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    long double m = x(i, 0);
    for (std::size_t j = 1; j < d; ++j) m = std::max<long double>(m, x(i, j));
    long double sum = 0.0L;
    for (std::size_t j = 0; j < d; ++j) sum += expl((long double)x(i, j) - m);
    for (std::size_t j = 0; j < d; ++j)
      y(i, j) = (double)(expl((long double)x(i, j) - m) / sum);
  }
  return y;
}

// Directional derivatives used by the transpose-consistency checks.

Tensor jvp_matmul(const Tensor& a, const Tensor& b, const Tensor& da,
                  const Tensor& db) {
  return add(matmul(da, b), matmul(a, db));
}

Tensor jvp_linear(const Tensor& x, const LinearParams& p, const Tensor& dx,
                  const Tensor& dw, const Tensor& db) {
  Tensor y = add(matmul(dx, transpose(p.w)), matmul(x, transpose(dw)));
  for (std::size_t i = 0; i < y.dim(0); ++i)
    for (std::size_t j = 0; j < y.dim(1); ++j) y(i, j) += db(j);
  return y;
}

Tensor jvp_layer_norm(const Tensor& x, const Tensor& g, double eps,
                      const Tensor& dx, const Tensor& dg, const Tensor& db) {
  const std::size_t s = x.dim(0), d = x.dim(1);
  Tensor y({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    double mean = 0.0, dmean = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mean += x(i, j);
      dmean += dx(i, j);
    }
    mean /= double(d);
    dmean /= double(d);
    double var = 0.0, dvar = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      var += (x(i, j) - mean) * (x(i, j) - mean);
      dvar += 2.0 * (x(i, j) - mean) * (dx(i, j) - dmean);
    }
    var /= double(d);
    dvar /= double(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    const double drstd = -0.5 * rstd * rstd * rstd * dvar;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (x(i, j) - mean) * rstd;
      const double dxhat = (dx(i, j) - dmean) * rstd + (x(i, j) - mean) * drstd;
      y(i, j) = dg(j) * xhat + g(j) * dxhat + db(j);
    }
  }
  return y;
}

Tensor jvp_softmax(const Tensor& y, const Tensor& dx) {
  const std::size_t s = y.dim(0), d = y.dim(1);
  Tensor dy({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) t += y(i, j) * dx(i, j);
    for (std::size_t j = 0; j < d; ++j) dy(i, j) = y(i, j) * (dx(i, j) - t);
  }
  return dy;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul matches the naive triple loop bit for bit") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor a = random_tensor({5, 7}, 100 + seed);
    Tensor b = random_tensor({7, 3}, 200 + seed);
    Tensor c = matmul(a, b);
    Tensor ref = naive_matmul(a, b);
    CHECK(bitwise_equal(c, ref));
  }
  // a rectangular shape with a longer inner dimension
  Tensor a = random_tensor({3, 64}, 7);
  Tensor b = random_tensor({64, 9}, 8);
  CHECK(bitwise_equal(matmul(a, b), naive_matmul(a, b)));
}

TEST_CASE("matmul rejects mismatched inner dimensions, reporting both shapes") {
  Tensor a = random_tensor({4, 5}, 1);
  Tensor b = random_tensor({6, 3}, 2);
  try {
    matmul(a, b);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[4, 5]") != std::string::npos);
    CHECK(msg.find("[6, 3]") != std::string::npos);
  }
}

TEST_CASE("layer_norm matches a two-pass oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor x = random_tensor({6, 32}, 300 + seed, 2.0);
    Tensor g = random_tensor({32}, 400 + seed, 0.5);
    Tensor b = random_tensor({32}, 500 + seed, 0.5);
    Tensor y = layer_norm(x, g, b, 1e-5);
    CHECK(max_rel_diff(y, oracle_layer_norm(x, g, b, 1e-5)) < 1e-12);
  }
}

TEST_CASE("layer_norm handles a constant row via eps") {
  Tensor x({2, 8});
  for (std::size_t j = 0; j < 8; ++j) x(0, j) = 3.5;  // zero variance row
  for (std::size_t j = 0; j < 8; ++j) x(1, j) = double(j);
  Tensor g({8}), b({8});
  fill(g, 1.0);
  Tensor y = layer_norm(x, g, b, 1e-5);
  CHECK(all_finite(y));
  for (std::size_t j = 0; j < 8; ++j) CHECK(y(0, j) == 0.0);
}

TEST_CASE("softmax_rows matches an extended-precision oracle and sums to one") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor x = random_tensor({5, 11}, 600 + seed, 30.0);
    // exercise the additive-mask path: a very negative entry must underflow
    // to an exact zero probability without disturbing the rest of the row
    x(2, 4) = -1e30;
    Tensor y = softmax_rows(x);
    CHECK(max_rel_diff(y, oracle_softmax(x)) < 1e-12);
    CHECK(y(2, 4) == 0.0);
    for (std::size_t i = 0; i < y.dim(0); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < y.dim(1); ++j) s += y(i, j);
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax_rows survives extreme but finite logits") {
  Tensor x({1, 4});
  x(0, 0) = 700.0;
  x(0, 1) = -700.0;
  x(0, 2) = 699.0;
  x(0, 3) = 0.0;
  Tensor y = softmax_rows(x);
  CHECK(all_finite(y));
  CHECK(y(0, 0) > y(0, 2));
  CHECK(y(0, 1) == 0.0);  // underflows cleanly
}

TEST_CASE("gelu fixed points and tanh-form identity") {
  Tensor x({1, 3});
  x(0, 0) = 0.0;
  x(0, 1) = 5.0;
  x(0, 2) = -5.0;
  Tensor y = gelu(x);
  CHECK(y(0, 0) == 0.0);
  // gelu(x) - gelu(-x) == x for the tanh form
  CHECK(rel_err(y(0, 1) - y(0, 2), 5.0) < 1e-12);
  // large positive input passes through, large negative is crushed
  CHECK(rel_err(y(0, 1), 5.0) < 1e-4);
  CHECK(std::fabs(y(0, 2)) < 1e-4);
}

// <vjp(u), v> must equal <u, jvp(v)> for every primitive: the adjoint code
// that the solvers rely on is exactly these VJPs composed.
TEST_CASE("vjp/jvp transpose consistency at 1e-10") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // matmul
    {
      Tensor a = random_tensor({4, 6}, 10 + seed);
      Tensor b = random_tensor({6, 5}, 20 + seed);
      Tensor u = random_tensor({4, 5}, 30 + seed);
      Tensor va = random_tensor({4, 6}, 40 + seed);
      Tensor vb = random_tensor({6, 5}, 50 + seed);
      Tensor da = matmul(u, transpose(b));
      Tensor db = matmul(transpose(a), u);
      double lhs = dot(da, va) + dot(db, vb);
      double rhs = dot(u, jvp_matmul(a, b, va, vb));
      CHECK(rel_err(lhs, rhs) < 1e-10);
    }
    // linear
    {
      Tensor x = random_tensor({5, 8}, 60 + seed);
      LinearParams p{random_tensor({3, 8}, 70 + seed),
                     random_tensor({3}, 80 + seed)};
      Tensor u = random_tensor({5, 3}, 90 + seed);
      Tensor vx = random_tensor({5, 8}, 91 + seed);
      Tensor vw = random_tensor({3, 8}, 92 + seed);
      Tensor vb = random_tensor({3}, 93 + seed);
      LinearVjp vjp = vjp_linear(x, p, u);
      double lhs = dot(vjp.dx, vx) + dot(vjp.dw, vw) + dot(vjp.db, vb);
      double rhs = dot(u, jvp_linear(x, p, vx, vw, vb));
      CHECK(rel_err(lhs, rhs) < 1e-10);
    }
    // layer_norm
    {
      Tensor x = random_tensor({4, 16}, 94 + seed, 1.5);
      Tensor g = random_tensor({16}, 95 + seed);
      Tensor b = random_tensor({16}, 96 + seed);
      Tensor u = random_tensor({4, 16}, 97 + seed);
      Tensor vx = random_tensor({4, 16}, 98 + seed);
      Tensor vg = random_tensor({16}, 99 + seed);
      Tensor vb = random_tensor({16}, 101 + seed);
      LayerNormVjp vjp = vjp_layer_norm(x, g, 1e-5, u);
      double lhs = dot(vjp.dx, vx) + dot(vjp.dgain, vg) + dot(vjp.dbias, vb);
      double rhs = dot(u, jvp_layer_norm(x, g, 1e-5, vx, vg, vb));
      CHECK(rel_err(lhs, rhs) < 1e-10);
    }
    // softmax
    {
      Tensor x = random_tensor({4, 9}, 102 + seed, 2.0);
      Tensor y = softmax_rows(x);
      Tensor u = random_tensor({4, 9}, 103 + seed);
      Tensor v = random_tensor({4, 9}, 104 + seed);
      double lhs = dot(vjp_softmax_rows(y, u), v);
      double rhs = dot(u, jvp_softmax(y, v));
      CHECK(rel_err(lhs, rhs) < 1e-10);
    }
    // gelu
    {
      Tensor x = random_tensor({3, 7}, 105 + seed, 2.0);
      Tensor u = random_tensor({3, 7}, 106 + seed);
      Tensor v = random_tensor({3, 7}, 107 + seed);
      double lhs = dot(vjp_gelu(x, u), v);
      // gelu is diagonal, so its jvp along v is vjp with upstream v.
      double rhs = dot(u, vjp_gelu(x, v));
      CHECK(rel_err(lhs, rhs) < 1e-10);
    }
  }
}

// Independent second route: central differences on <u, f(.)>.
TEST_CASE("vjp agrees with central finite differences") {
  const double step = 1e-6, tol = 1e-5;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    // linear wrt every input
    {
      Tensor x = random_tensor({4, 6}, 110 + seed);
      LinearParams p{random_tensor({3, 6}, 111 + seed),
                     random_tensor({3}, 112 + seed)};
      Tensor u = random_tensor({4, 3}, 113 + seed);
      LinearVjp vjp = vjp_linear(x, p, u);
      auto loss = [&]() { return dot(u, linear(x, p)); };
      Tensor vx = random_tensor({4, 6}, 114 + seed);
      CHECK(rel_err(central_diff(x, vx, loss, step), dot(vjp.dx, vx)) < tol);
      Tensor vw = random_tensor({3, 6}, 115 + seed);
      CHECK(rel_err(central_diff(p.w, vw, loss, step), dot(vjp.dw, vw)) < tol);
      Tensor vb = random_tensor({3}, 116 + seed);
      CHECK(rel_err(central_diff(p.b, vb, loss, step), dot(vjp.db, vb)) < tol);
    }
    // layer_norm wrt x and gain
    {
      Tensor x = random_tensor({3, 12}, 120 + seed, 1.5);
      Tensor g = random_tensor({12}, 121 + seed);
      Tensor b = random_tensor({12}, 122 + seed);
      Tensor u = random_tensor({3, 12}, 123 + seed);
      LayerNormVjp vjp = vjp_layer_norm(x, g, 1e-5, u);
      auto loss = [&]() { return dot(u, layer_norm(x, g, b, 1e-5)); };
      Tensor vx = random_tensor({3, 12}, 124 + seed);
      CHECK(rel_err(central_diff(x, vx, loss, step), dot(vjp.dx, vx)) < tol);
      Tensor vg = random_tensor({12}, 125 + seed);
      CHECK(rel_err(central_diff(g, vg, loss, step), dot(vjp.dgain, vg)) < tol);
    }
    // softmax and gelu wrt x
    {
      Tensor x = random_tensor({3, 8}, 130 + seed, 2.0);
      Tensor u = random_tensor({3, 8}, 131 + seed);
      auto loss_sm = [&]() { return dot(u, softmax_rows(x)); };
      Tensor v = random_tensor({3, 8}, 132 + seed);
      Tensor y = softmax_rows(x);
      CHECK(rel_err(central_diff(x, v, loss_sm, step),
                    dot(vjp_softmax_rows(y, u), v)) < tol);
      auto loss_gelu = [&]() { return dot(u, gelu(x)); };
      CHECK(rel_err(central_diff(x, v, loss_gelu, step),
                    dot(vjp_gelu(x, u), v)) < tol);
    }
  }
}

TEST_CASE("finite inputs stay finite through every primitive") {
  Tensor x = random_tensor({6, 16}, 140, 50.0);  // deliberately large spread
  Tensor g = random_tensor({16}, 141);
  Tensor b = random_tensor({16}, 142);
  LinearParams p{random_tensor({16, 16}, 143, 5.0), random_tensor({16}, 144)};
  CHECK(all_finite(linear(x, p)));
  CHECK(all_finite(layer_norm(x, g, b, 1e-5)));
  CHECK(all_finite(softmax_rows(x)));
  CHECK(all_finite(gelu(x)));
  CHECK(all_finite(matmul(x, random_tensor({16, 4}, 145))));
}

TEST_CASE("rank and shape validation") {
  CHECK_THROWS_AS(Tensor({1, 2, 3, 4}), ValidationError);
  CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{}), ValidationError);
  Tensor a = random_tensor({3, 4}, 1);
  Tensor b = random_tensor({3, 5}, 2);
  CHECK_THROWS_AS(add(a, b), ValidationError);
  CHECK_THROWS_AS(dot(a, b), ValidationError);
  Tensor t3 = random_tensor({2, 3, 4}, 3);
  CHECK_THROWS_AS(matmul(t3, a), ValidationError);
  CHECK(slice0(t3, 1).shape() == std::vector<std::size_t>({3, 4}));
  CHECK_THROWS_AS(slice0(t3, 2), ValidationError);
}

}  // TEST_SUITE

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
#ifndef MGLP_RNG_HPP_
#define MGLP_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace mglp {

// Counter-based randomness. Every consumer derives values from
// (master seed, purpose, indices) instead of advancing a shared stream, so a
// draw never depends on execution order, worker count, or how many other
// draws happened. This is what makes replay-from-checkpoint and the
// worker-count determinism guarantees possible.

namespace rng {

// Stream identifiers. Keep values stable: they are part of what makes a run
// reproducible from (seed, batch index).
enum Purpose : std::uint64_t {
  kInit = 1,        // parameter initialization
  kData = 2,        // synthetic task sample generation
  kDropout = 3,     // dropout masks
  kProbeInput = 4,  // Lipschitz probe base points
  kProbeDelta = 5,  // Lipschitz probe perturbations
  kTestOnly = 6,    // scratch streams inside the test suite
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Mixes an arbitrary-length key into one 64-bit value. Order-sensitive.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                            std::uint64_t b = 0, std::uint64_t c = 0,
                            std::uint64_t d = 0) {
  std::uint64_t s = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  s = splitmix64(s ^ c);
  s = splitmix64(s ^ d);
  return s;
}

// Uniform in [0, 1) with 53 random bits.
inline double u01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Multiply-shift; bias is < 2^-64 * n, irrelevant
// for the sample sizes used here.
inline std::uint64_t uniform_index(std::uint64_t bits, std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(bits) * n) >> 64);
}

// Standard normal via Box-Muller. Two independent counters per value keeps
// the mapping (counter -> value) pure.
inline double gaussian(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t k1 = derive(seed, a, b, c, d);
  std::uint64_t k2 = splitmix64(k1 ^ 0x452821e638d01377ULL);
  double u1 = u01(k1);
  double u2 = u01(k2);
  // u1 == 0 would hit log(0); nudge to the smallest representable draw.
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Normal(0, std) truncated to +/- 2 std, redrawing deterministically.
inline double truncated_gaussian(double stddev, std::uint64_t seed,
                                 std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    double g = gaussian(seed, a, b, c, attempt);
    if (g >= -2.0 && g <= 2.0) return g * stddev;
  }
}

}  // namespace rng
}  // namespace mglp

#endif  // MGLP_RNG_HPP_

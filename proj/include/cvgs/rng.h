// Copyright Contributors to the crossview-gs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace cvgs {

// Deterministic uniform draws built directly on the engine's bit stream.
// The standard distributions are implementation-defined, which would let
// the same seed produce different scenes under a different standard
// library; these helpers keep every artifact byte-reproducible.
inline double rng_u01(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

inline double rng_uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * rng_u01(rng);
}

inline double rng_normal(std::mt19937_64& rng) {
  // Box-Muller on the portable uniforms; one draw per call keeps the
  // consumption pattern obvious at call sites.
  double u1 = rng_u01(rng);
  while (u1 <= 0.0) u1 = rng_u01(rng);
  const double u2 = rng_u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Fisher-Yates with the raw engine; std::shuffle's internals are also
// implementation-defined.
template <typename T>
void rng_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = size_t(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace cvgs

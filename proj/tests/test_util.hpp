#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "massweight/count_table.hpp"
#include "massweight/rng.hpp"

namespace mwtest {

using massweight::MassTable;
using massweight::SampleRecord;
using massweight::SplitMix64;

inline std::string key_of(unsigned idx) { return std::string(1, static_cast<char>(idx)); }

/// The closed-form fixture: masses (1,1), counts (2,1), f = (1,3).
/// Its solved normalization constant is (3+sqrt(5))/2.
inline MassTable fixture_table() {
  MassTable t;
  t.insert(SampleRecord{key_of(0x0a), 1.0, 1.0}, 2);
  t.insert(SampleRecord{key_of(0x0b), 1.0, 3.0}, 1);
  return t;
}

inline constexpr double kFixtureZ = 2.618033988749894848;  // (3+sqrt(5))/2

/// Random table in the regular regime: 2 <= M < N <= 20, masses
/// log-uniform in [1e-3, 1], f uniform in [-1, 1].
inline MassTable random_regular_table(SplitMix64& rng) {
  const std::uint64_t n = 3 + rng.next() % 18;       // N in [3,20]
  const std::uint64_t m = 2 + rng.next() % (n - 2);  // M in [2, N-1]
  std::vector<std::uint64_t> counts(m, 1);
  for (std::uint64_t extra = n - m; extra > 0; --extra) counts[rng.next() % m] += 1;
  MassTable t;
  for (std::uint64_t i = 0; i < m; ++i) {
    const double mass = std::pow(10.0, -3.0 * rng.next_double());
    const double f = 2.0 * rng.next_double() - 1.0;
    t.insert(SampleRecord{key_of(static_cast<unsigned>(i)), mass, f}, counts[i]);
  }
  return t;
}

inline bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace mwtest

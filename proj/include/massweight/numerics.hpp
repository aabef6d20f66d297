#pragma once

#include <cmath>
#include <cstdint>

namespace massweight::detail {

/// (1 - x)^n for x in [0,1], computed as exp(n*log1p(-x)).
/// Direct powering loses all precision for x near 0 with large n.
template <class Real>
Real pow1m(Real x, std::uint64_t n) {
  if (x >= Real(1)) return Real(0);
  if (n == 0) return Real(1);
  using std::exp;
  using std::log1p;
  return exp(Real(n) * log1p(-x));
}

/// 1 - (1 - x)^n, computed as -expm1(n*log1p(-x)).
template <class Real>
Real one_minus_pow1m(Real x, std::uint64_t n) {
  if (x >= Real(1)) return Real(1);
  if (n == 0) return Real(0);
  using std::expm1;
  using std::log1p;
  return -expm1(Real(n) * log1p(-x));
}

}  // namespace massweight::detail

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>

#include "massweight/count_table.hpp"
#include "massweight/errors.hpp"
#include "massweight/numerics.hpp"
#include "massweight/rng.hpp"

namespace massweight {

// ---------------------------------------------------------------------------
// 96-bit keys
// ---------------------------------------------------------------------------

/// Unsigned 96-bit point index with a canonical 24-hex-digit encoding
/// (big-endian, so byte order equals numeric order).
struct WideKey {
  unsigned __int128 value = 0;

  static constexpr int kBytes = 12;

  static WideKey from_u64(std::uint64_t v) { return WideKey{v}; }

  /// floor(x) for nonnegative x; x beyond 2^96 is out of range.
  static WideKey from_real(double x) {
    if (!(x >= 0.0)) throw DomainError("WideKey: negative value");
    if (x >= 0x1.0p96) throw DomainError("WideKey: value beyond 96 bits");
    return WideKey{static_cast<unsigned __int128>(x)};
  }

  static WideKey from_bytes(std::string_view bytes) {
    if (bytes.size() != kBytes) throw ParseError("WideKey: expected 12 bytes");
    unsigned __int128 v = 0;
    for (unsigned char c : bytes) v = (v << 8) | c;
    return WideKey{v};
  }

  static WideKey from_hex(std::string_view hex) { return from_bytes(hex_decode(hex)); }

  std::string bytes() const {
    std::string out(kBytes, '\0');
    unsigned __int128 v = value;
    for (int i = kBytes - 1; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = static_cast<char>(v & 0xFF);
      v >>= 8;
    }
    return out;
  }

  std::string hex() const { return hex_encode(bytes()); }

  /// The real number x = i + 1/2 the key stands for. Exact for i < 2^53.
  double midpoint() const { return static_cast<double>(value) + 0.5; }

  friend auto operator<=>(const WideKey&, const WideKey&) = default;
};

// ---------------------------------------------------------------------------
// Heavy-tail point masses from a survival function
// ---------------------------------------------------------------------------

/// Survival S(x) = (1 + x/a)^(-b); point masses are its unit finite
/// differences, so they telescope to exactly 1.
struct TailDistribution {
  double a = 1.0;  // scale
  double b = 1.0;  // tail exponent

  void validate() const {
    if (!(a > 0.0) || !(b > 0.0))
      throw DomainError("TailDistribution: parameters must be positive");
  }

  double survival(double x) const { return std::exp(-b * std::log1p(x / a)); }

  /// Continuous CDF 1 - S(x).
  double cdf(double x) const { return -std::expm1(-b * std::log1p(x / a)); }
};

namespace detail {

/// p(i) = S(i) - S(i+1) in the cancellation-safe form
/// S(i) * (1 - exp(-b * log1p(1/(a+i)))). Underflows to exact 0 deep in
/// the tail, which only affects points that cannot be sampled anyway.
inline double pmf_at(double i, const TailDistribution& dist) {
  const double s = dist.survival(i);
  return s * -std::expm1(-dist.b * std::log1p(1.0 / (dist.a + i)));
}

}  // namespace detail

inline double pmf(WideKey key, const TailDistribution& dist) {
  dist.validate();
  return detail::pmf_at(static_cast<double>(key.value), dist);
}

/// Exact inverse-CDF sampler: u in [0,1) maps to
/// floor(a * ((1-u)^(-1/b) - 1)), so the induced key distribution is
/// exactly pmf.
inline WideKey sample_key(double u, const TailDistribution& dist) {
  dist.validate();
  if (!(u >= 0.0) || u >= 1.0) throw DomainError("sample_key: u outside [0,1)");
  const double x = dist.a * std::expm1(-std::log1p(-u) / dist.b);
  return WideKey::from_real(x);
}

/// Oscillatory probe f(x_i) = cos(2 pi m F(x_i)) at x_i = i + 1/2; its
/// continuum integral against the density is exactly 0 for m >= 1.
inline double test_function(WideKey key, const TailDistribution& dist, int m) {
  dist.validate();
  if (m < 0) throw DomainError("test_function: m must be nonnegative");
  return std::cos(2.0 * std::numbers::pi * static_cast<double>(m) *
                  dist.cdf(key.midpoint()));
}

/// Expected mass on points that appear at least once in n draws:
/// sum over i of p(i) * (1 - (1 - p(i))^n). The tail beyond the truncation
/// point X contributes at most min(S(X), n * p(X) * S(X)).
inline double expected_sampled_mass(const TailDistribution& dist, std::uint64_t n,
                                    double tail_bound = 1e-9) {
  dist.validate();
  double total = 0.0;
  double i = 0.0;
  // hard cap keeps pathological parameter choices from spinning forever
  const double cap = 1.0e8;
  while (i < cap) {
    const double p = detail::pmf_at(i, dist);
    total += p * detail::one_minus_pow1m(p, n);
    i += 1.0;
    // pmf decreases in i, so p bounds every remaining point mass
    const double s = dist.survival(i);
    if (std::min(s, static_cast<double>(n) * p * s) < tail_bound) break;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Regime presets
// ---------------------------------------------------------------------------

enum class Regime { concentrated, intermediate, tail_dominated };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::concentrated: return "concentrated";
    case Regime::intermediate: return "intermediate";
    case Regime::tail_dominated: return "tail_dominated";
  }
  return "?";
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "concentrated") return Regime::concentrated;
  if (s == "intermediate") return Regime::intermediate;
  if (s == "tail_dominated") return Regime::tail_dominated;
  throw ParseError("unknown regime '" + s + "'");
}

struct SyntheticConfig {
  TailDistribution dist;
  std::uint64_t n_draws = 0;
  int m = 4;  // oscillation index of the test function
  std::uint64_t seed = 12345;
  std::optional<Regime> regime;
  /// Filled by regime_config at generation time; not part of the JSON form.
  double expected_mass_on_sample = 0.0;
};

/// Fixed, nameable experiment presets spanning the three regimes of
/// sampled-mass concentration.
inline SyntheticConfig regime_config(Regime regime) {
  SyntheticConfig cfg;
  cfg.regime = regime;
  switch (regime) {
    case Regime::concentrated:
      cfg.dist = {2.0, 3.0};
      cfg.n_draws = 10'000;
      break;
    case Regime::intermediate:
      cfg.dist = {50.0, 1.5};
      cfg.n_draws = 1'000;
      break;
    case Regime::tail_dominated:
      cfg.dist = {1.0e4, 0.8};
      cfg.n_draws = 100;
      break;
  }
  cfg.expected_mass_on_sample = expected_sampled_mass(cfg.dist, cfg.n_draws);
  return cfg;
}

/// Draws keys by inverse CDF and attaches their mass and test-function
/// value; plugs into run_replicates.
struct SyntheticSampler {
  TailDistribution dist;
  int m = 4;

  SampleRecord operator()(SplitMix64& rng) const {
    const WideKey key = sample_key(rng.next_double(), dist);
    return SampleRecord{key.bytes(), pmf(key, dist), test_function(key, dist, m)};
  }
};

}  // namespace massweight

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "massweight/count_table.hpp"
#include "massweight/errors.hpp"
#include "massweight/numerics.hpp"

namespace massweight {

// ---------------------------------------------------------------------------
// Boundary classification
// ---------------------------------------------------------------------------

enum class BoundaryCase {
  empty,         // N = 0
  single_draw,   // N = 1
  concentrated,  // M = 1, N >= 2
  all_distinct,  // M = N, N >= 2
  regular,       // 2 <= M < N
};

inline const char* to_string(BoundaryCase c) {
  switch (c) {
    case BoundaryCase::empty: return "empty";
    case BoundaryCase::single_draw: return "single_draw";
    case BoundaryCase::concentrated: return "concentrated";
    case BoundaryCase::all_distinct: return "all_distinct";
    case BoundaryCase::regular: return "regular";
  }
  return "?";
}

inline BoundaryCase classify(const SampleSummary& s) {
  if (s.n_draws == 0) return BoundaryCase::empty;
  if (s.n_draws == 1) return BoundaryCase::single_draw;
  if (s.n_distinct == 1) return BoundaryCase::concentrated;
  if (s.n_distinct == s.n_draws) return BoundaryCase::all_distinct;
  return BoundaryCase::regular;
}

// ---------------------------------------------------------------------------
// The fixpoint map and its derivative
// ---------------------------------------------------------------------------

/// Right-hand side of the normalization fixpoint equation:
/// sum over sampled points of p / (1 - (1 - p/z)^n).
/// Defined for z >= P(S); each term equals p at the certain-inclusion end
/// and grows toward z/n * ... as z increases.
inline double fixpoint_map(double z, std::span<const double> masses, std::uint64_t n) {
  if (n == 0) throw DomainError("fixpoint_map: no draws");
  const double ps = std::accumulate(masses.begin(), masses.end(), 0.0);
  if (z < ps) throw DomainError("fixpoint_map: z below the sampled mass");
  double sum = 0.0;
  for (const double p : masses) sum += p / detail::one_minus_pow1m(p / z, n);
  return sum;
}

/// Analytic derivative of the fixpoint map,
/// sum of n*(p/z)^2*(1-p/z)^(n-1) / (1-(1-p/z)^n)^2. Strictly positive for
/// masses strictly inside (0, z); each term tends to 1/n as p/z -> 0.
inline double fixpoint_map_derivative(double z, std::span<const double> masses,
                                      std::uint64_t n) {
  if (n == 0) throw DomainError("fixpoint_map_derivative: no draws");
  const double ps = std::accumulate(masses.begin(), masses.end(), 0.0);
  if (z < ps) throw DomainError("fixpoint_map_derivative: z below the sampled mass");
  double sum = 0.0;
  for (const double p : masses) {
    const double x = p / z;
    const double q = detail::one_minus_pow1m(x, n);
    sum += static_cast<double>(n) * x * x * detail::pow1m(x, n - 1) / (q * q);
  }
  return sum;
}

inline double fixpoint_map(double z, const MassTable& table) {
  const auto m = mass_vector(table);
  return fixpoint_map(z, m, summarize(table).n_draws);
}

inline double fixpoint_map_derivative(double z, const MassTable& table) {
  const auto m = mass_vector(table);
  return fixpoint_map_derivative(z, m, summarize(table).n_draws);
}

// ---------------------------------------------------------------------------
// Auxiliary profile functions (exposed for the convexity property suite)
// ---------------------------------------------------------------------------

/// Reciprocal inclusion probability as a function of the scaled mass
/// t = n*p/z: 1 / (1 - (1 - t/n)^n), on 0 < t <= n.
template <class Real>
Real recip_inclusion(Real t, std::uint64_t n) {
  if (n == 0) throw DomainError("recip_inclusion: n must be >= 1");
  if (!(t > Real(0)) || t > Real(n)) throw DomainError("recip_inclusion: t outside (0, n]");
  return Real(1) / detail::one_minus_pow1m(t / Real(n), n);
}

/// n -> infinity limit of recip_inclusion: 1 / (1 - exp(-t)), t > 0.
template <class Real>
Real recip_inclusion_limit(Real t) {
  if (!(t > Real(0))) throw DomainError("recip_inclusion_limit: t must be positive");
  using std::expm1;
  return Real(1) / -expm1(-t);
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

/// Good-Turing starting guess P(S) / (1 - M'/N); +infinity when every draw
/// is a singleton (that is the all-distinct boundary case anyway).
inline double good_turing_init(const SampleSummary& s) {
  if (s.n_draws == 0) throw DomainError("good_turing_init: no draws");
  if (s.n_singletons == s.n_draws) return std::numeric_limits<double>::infinity();
  const double frac =
      static_cast<double>(s.n_singletons) / static_cast<double>(s.n_draws);
  return s.mass_on_sample / (1.0 - frac);
}

enum class SolveMethod { picard, secant, newton };
enum class InitKind { good_turing, mass_on_sample };

inline const char* to_string(SolveMethod m) {
  switch (m) {
    case SolveMethod::picard: return "picard";
    case SolveMethod::secant: return "secant";
    case SolveMethod::newton: return "newton";
  }
  return "?";
}

struct SolveOptions {
  SolveMethod method = SolveMethod::newton;
  InitKind init = InitKind::good_turing;
  double tol = 1e-12;  // bound on both the relative step and the relative residual
  int max_iterations = 200;
};

struct TraceRow {
  int k = 0;
  double z = 0.0;
  double map_z = 0.0;     // fixpoint map evaluated at z
  double residual = 0.0;  // |map_z - z| / z
};

/// Solved normalization constant. The boundary tag carries the meaning of
/// z: finite fixpoint (regular), P(S) (concentrated), +infinity sentinel
/// (all_distinct), 0 (empty), NaN = undetermined (single_draw). Consumers
/// must branch on the tag rather than on the raw value.
struct ZSolution {
  double z = std::numeric_limits<double>::quiet_NaN();
  BoundaryCase boundary = BoundaryCase::empty;
  int iterations = 0;
  SolveMethod method = SolveMethod::newton;
  double residual = 0.0;
  SampleSummary summary;
};

namespace detail {

struct FixpointProblem {
  std::span<const double> masses;
  std::uint64_t n = 0;
  double ps = 0.0;

  double map(double z) const { return fixpoint_map(z, masses, n); }
  double map_derivative(double z) const { return fixpoint_map_derivative(z, masses, n); }
};

/// Doubling search for an upper bracket with map(z) < z. Terminates because
/// map(z)/z -> M/N < 1 in the regular case.
inline double upper_bracket(const FixpointProblem& prob, double from, double* lo) {
  double hi = std::max(from, prob.ps);
  for (int i = 0; i < 2048; ++i) {
    if (prob.map(hi) < hi) return hi;
    *lo = hi;
    hi *= 2.0;
  }
  throw NoConvergence("no upper bracket found (non-contracting input?)");
}

}  // namespace detail

/// Solves z = fixpoint_map(z) for a regular sample; boundary cases
/// short-circuit to their closed answers. `masses` are the per-key masses
/// of the sample (any order), consistent with `summary`.
inline ZSolution solve_z(const SampleSummary& summary, std::span<const double> masses,
                         const SolveOptions& opt = {},
                         std::vector<TraceRow>* trace = nullptr) {
  ZSolution sol;
  sol.method = opt.method;
  sol.summary = summary;
  sol.boundary = classify(summary);
  const double ps = summary.mass_on_sample;

  switch (sol.boundary) {
    case BoundaryCase::empty:
      sol.z = 0.0;
      return sol;
    case BoundaryCase::single_draw:
      sol.z = std::numeric_limits<double>::quiet_NaN();  // undetermined
      return sol;
    case BoundaryCase::concentrated:
      sol.z = ps;
      return sol;
    case BoundaryCase::all_distinct:
      sol.z = std::numeric_limits<double>::infinity();
      return sol;
    case BoundaryCase::regular:
      break;
  }

  detail::FixpointProblem prob{masses, summary.n_draws, ps};
  double z = (opt.init == InitKind::good_turing) ? good_turing_init(summary) : ps;
  z = std::max(z, ps);

  double map_z = prob.map(z);
  double residual = std::abs(map_z - z) / z;
  if (trace) trace->push_back({0, z, map_z, residual});
  if (residual <= opt.tol) {
    sol.z = z;
    sol.residual = residual;
    return sol;
  }

  // Bracket [lo, hi] with map(lo) >= lo and map(hi) < hi, used to safeguard
  // secant and Newton steps. map(P(S)) >= P(S) always.
  double lo = ps;
  double hi = 0.0;
  if (opt.method != SolveMethod::picard) {
    if (map_z < z) {
      hi = z;
    } else {
      lo = z;
      hi = detail::upper_bracket(prob, 2.0 * z, &lo);
    }
  }

  double z_prev = z;
  double r_prev = map_z - z;
  bool have_prev = false;

  for (int k = 1; k <= opt.max_iterations; ++k) {
    double z_next = 0.0;
    switch (opt.method) {
      case SolveMethod::picard: {
        // Picard update accelerated with the Aitken delta-squared formula
        // (Steffensen step); falls back to the plain update when the
        // extrapolation is degenerate or leaves the domain.
        const double y1 = map_z;
        const double y2 = prob.map(y1);
        const double denom = y2 - 2.0 * y1 + z;
        z_next = y1;
        if (denom != 0.0) {
          const double d = y1 - z;
          const double aitken = z - d * d / denom;
          if (std::isfinite(aitken) && aitken >= ps) z_next = aitken;
        }
        break;
      }
      case SolveMethod::secant: {
        if (!have_prev) {
          // Documented initial pair (z0, 1.1*z0).
          z_next = std::min(1.1 * z, hi);
          if (z_next == z) z_next = 0.5 * (lo + hi);
        } else {
          const double r = map_z - z;
          const double denom = r - r_prev;
          z_next = (denom != 0.0) ? z - r * (z - z_prev) / denom : 0.5 * (lo + hi);
          if (!std::isfinite(z_next) || z_next < lo || z_next > hi)
            z_next = 0.5 * (lo + hi);
        }
        break;
      }
      case SolveMethod::newton: {
        const double r = map_z - z;
        const double dr = prob.map_derivative(z) - 1.0;
        z_next = (dr != 0.0) ? z - r / dr : 0.5 * (lo + hi);
        if (!std::isfinite(z_next) || z_next < lo || z_next > hi)
          z_next = 0.5 * (lo + hi);
        break;
      }
    }

    const double map_next = prob.map(z_next);
    const double res_next = std::abs(map_next - z_next) / z_next;
    if (trace) trace->push_back({k, z_next, map_next, res_next});
    if (opt.method != SolveMethod::picard) {
      if (map_next - z_next >= 0.0) lo = std::max(lo, z_next);
      else hi = std::min(hi, z_next);
    }

    const double step = std::abs(z_next - z) / z_next;
    z_prev = z;
    r_prev = map_z - z;
    have_prev = true;
    z = z_next;
    map_z = map_next;

    if (step <= opt.tol && res_next <= opt.tol) {
      sol.z = z;
      sol.iterations = k;
      sol.residual = res_next;
      return sol;
    }
  }
  throw NoConvergence("fixpoint iteration did not converge in " +
                      std::to_string(opt.max_iterations) + " iterations");
}

inline ZSolution solve_z(const MassTable& table, const SolveOptions& opt = {},
                         std::vector<TraceRow>* trace = nullptr) {
  const auto masses = mass_vector(table);
  return solve_z(summarize(table), masses, opt, trace);
}

inline ZSolution solve_z(const MassTable& table, SolveMethod method) {
  return solve_z(table, SolveOptions{.method = method});
}

}  // namespace massweight

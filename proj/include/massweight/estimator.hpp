#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>

#include "massweight/count_table.hpp"
#include "massweight/errors.hpp"
#include "massweight/numerics.hpp"
#include "massweight/types.hpp"
#include "massweight/zsolver.hpp"

namespace massweight {

/// Probability that a point of mass `mass` shows up at least once in n
/// draws from the distribution normalized by z: 1 - (1 - mass/z)^n.
template <class Real>
Real inclusion_prob(Real mass, Real z, std::uint64_t n) {
  if (!(mass > Real(0))) throw DomainError("inclusion_prob: mass must be positive");
  if (mass > z) throw DomainError("inclusion_prob: mass exceeds z");
  if (n == 0) throw DomainError("inclusion_prob: n must be positive");
  return detail::one_minus_pow1m(mass / z, n);
}

/// Per-key weights w = mass / inclusion_prob. Off-sample points are
/// implicitly zero. For a solved z the weights sum back to z.
using WeightVector = std::map<std::string, double>;

inline WeightVector weights(const MassTable& table, double z, std::uint64_t n) {
  WeightVector w;
  for (const auto& [key, e] : table)
    w.emplace(key, e.mass / inclusion_prob(e.mass, z, n));
  return w;
}

/// Plain sample average, sum(count * f) / N.
inline double estimate_blue(const MassTable& table) {
  const auto s = summarize(table);
  if (s.n_draws == 0) throw DomainError("estimate_blue: undefined on an empty table");
  double sum = 0.0;
  for (const auto& [key, e] : table) sum += static_cast<double>(e.count) * e.fvalue;
  return sum / static_cast<double>(s.n_draws);
}

/// Mass-weighted estimate z^-1 * sum(w * f), with the boundary-case
/// fallbacks: all-distinct samples fall back to the plain average
/// (bit-for-bit), single-point samples return f at the unique key, and an
/// empty sample is undefined (NaN).
inline double estimate_new(const MassTable& table, const ZSolution& zsol) {
  switch (zsol.boundary) {
    case BoundaryCase::empty:
      return std::numeric_limits<double>::quiet_NaN();
    case BoundaryCase::single_draw:
    case BoundaryCase::concentrated:
      return table.begin()->second.fvalue;
    case BoundaryCase::all_distinct:
      return estimate_blue(table);
    case BoundaryCase::regular:
      break;
  }
  const std::uint64_t n = zsol.summary.n_draws;
  double sum = 0.0;
  for (const auto& [key, e] : table)
    sum += e.mass / inclusion_prob(e.mass, zsol.z, n) * e.fvalue;
  return sum / zsol.z;
}

// ---------------------------------------------------------------------------
// Closed-form per-point variance diagnostics (diagonal terms)
// ---------------------------------------------------------------------------

/// Variance of count/n at a single point: (1/n)(p/z)(1 - p/z).
template <class Real>
Real var_diag_blue(Real mass, Real z, std::uint64_t n) {
  if (mass < Real(0) || mass > z) throw DomainError("var_diag_blue: mass outside [0, z]");
  if (n == 0) throw DomainError("var_diag_blue: n must be positive");
  const Real x = mass / z;
  return x * (Real(1) - x) / Real(n);
}

/// Variance of the mass-weighted per-point estimator:
/// (p/z)^2 (1-p/z)^n / (1 - (1-p/z)^n). Decays exponentially once
/// n*p/z is large, which is where the variance reduction comes from.
template <class Real>
Real var_diag_new(Real mass, Real z, std::uint64_t n) {
  if (!(mass > Real(0)) || mass > z) throw DomainError("var_diag_new: mass outside (0, z]");
  if (n == 0) throw DomainError("var_diag_new: n must be positive");
  const Real x = mass / z;
  return x * x * detail::pow1m(x, n) / detail::one_minus_pow1m(x, n);
}

// ---------------------------------------------------------------------------
// Full covariance matrices on small explicit domains
// ---------------------------------------------------------------------------

/// Covariance of the count/n vector over the listed points, rows/cols in
/// input order: diag (1/n) x_i (1-x_i), off-diag -(1/n) x_i x_j.
template <class Real>
MatrixX<Real> cov_matrix_blue(const VectorX<Real>& masses, Real z, std::uint64_t n) {
  const Eigen::Index k = masses.size();
  if (k == 0) throw DimensionError("cov_matrix_blue: empty mass vector");
  if (n == 0) throw DomainError("cov_matrix_blue: n must be positive");
  if (masses.sum() > z * (Real(1) + Real(1e-12)))
    throw DomainError("cov_matrix_blue: masses sum beyond z");
  const VectorX<Real> x = masses / z;
  MatrixX<Real> cov = -(x * x.transpose()) / Real(n);
  for (Eigen::Index i = 0; i < k; ++i) cov(i, i) = x(i) * (Real(1) - x(i)) / Real(n);
  return cov;
}

/// Covariance of the mass-weighted estimator vector at known z:
/// diag (p/z)^2 (1/q - 1); off-diag
/// -((x_i x_j)/(q_i q_j)) * ((1 - x_i - x_j + x_i x_j)^n - (1 - x_i - x_j)^n).
template <class Real>
MatrixX<Real> cov_matrix_new(const VectorX<Real>& masses, Real z, std::uint64_t n) {
  const Eigen::Index k = masses.size();
  if (k == 0) throw DimensionError("cov_matrix_new: empty mass vector");
  if (n == 0) throw DomainError("cov_matrix_new: n must be positive");
  if (masses.sum() > z * (Real(1) + Real(1e-12)))
    throw DomainError("cov_matrix_new: masses sum beyond z");
  using std::exp;
  using std::log1p;
  using std::pow;
  MatrixX<Real> cov(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Real xi = masses(i) / z;
    const Real qi = detail::one_minus_pow1m(xi, n);
    cov(i, i) = xi * xi * detail::pow1m(xi, n) / qi;
    for (Eigen::Index j = 0; j < i; ++j) {
      const Real xj = masses(j) / z;
      const Real qj = detail::one_minus_pow1m(xj, n);
      // (1 - xi - xj + xi*xj)^n = ((1-xi)(1-xj))^n, always well defined.
      const Real both_out = exp(Real(n) * (log1p(-xi) + log1p(-xj)));
      const Real s = xi + xj;
      // s > 1 can only happen outside the masses-sum precondition; evaluate
      // the expression as written in that case.
      const Real either_out =
          (s <= Real(1)) ? detail::pow1m(s, n) : pow(Real(1) - s, static_cast<int>(n));
      const Real c = -(xi * xj / (qi * qj)) * (both_out - either_out);
      cov(i, j) = c;
      cov(j, i) = c;
    }
  }
  return cov;
}

// ---------------------------------------------------------------------------
// Estimate reports
// ---------------------------------------------------------------------------

enum class ZMode { known, solved };

inline const char* to_string(ZMode m) {
  return m == ZMode::known ? "known" : "solved";
}

/// Paired estimates plus per-point diagonal variance diagnostics. The
/// covariance formulas are exact only when z was known before sampling;
/// z_mode records which situation produced the report.
struct EstimateReport {
  double fbar_new = std::numeric_limits<double>::quiet_NaN();
  double fbar_blue = std::numeric_limits<double>::quiet_NaN();
  double z_used = std::numeric_limits<double>::quiet_NaN();
  BoundaryCase boundary = BoundaryCase::empty;
  ZMode z_mode = ZMode::solved;
  std::map<std::string, double> per_point_var_new;
  std::map<std::string, double> per_point_var_blue;
};

namespace detail {

inline void fill_per_point_vars(EstimateReport& rep, const MassTable& table, double z,
                                std::uint64_t n) {
  for (const auto& [key, e] : table) {
    const std::string hex = hex_encode(key);
    rep.per_point_var_new.emplace(hex, var_diag_new(e.mass, z, n));
    rep.per_point_var_blue.emplace(hex, var_diag_blue(e.mass, z, n));
  }
}

}  // namespace detail

/// Solved-z report: estimates via estimate_new / estimate_blue with the
/// boundary fallbacks; per-point variances only where a finite usable z
/// exists (regular, concentrated).
inline EstimateReport make_report(const MassTable& table, const ZSolution& zsol) {
  EstimateReport rep;
  rep.boundary = zsol.boundary;
  rep.z_mode = ZMode::solved;
  rep.z_used = zsol.z;
  rep.fbar_new = estimate_new(table, zsol);
  rep.fbar_blue = table.empty() ? std::numeric_limits<double>::quiet_NaN()
                                : estimate_blue(table);
  if (zsol.boundary == BoundaryCase::regular ||
      zsol.boundary == BoundaryCase::concentrated)
    detail::fill_per_point_vars(rep, table, zsol.z, zsol.summary.n_draws);
  return rep;
}

/// Known-z report: the weighted formula is applied directly with the given
/// z (no boundary fallbacks apart from the empty table).
inline EstimateReport make_report(const MassTable& table, double known_z) {
  EstimateReport rep;
  rep.z_mode = ZMode::known;
  rep.z_used = known_z;
  const auto s = summarize(table);
  rep.boundary = classify(s);
  if (table.empty()) return rep;
  if (known_z < s.mass_on_sample)
    throw DomainError("make_report: known z below the sampled mass");
  rep.fbar_blue = estimate_blue(table);
  double sum = 0.0;
  for (const auto& [key, e] : table)
    sum += e.mass / inclusion_prob(e.mass, known_z, s.n_draws) * e.fvalue;
  rep.fbar_new = sum / known_z;
  detail::fill_per_point_vars(rep, table, known_z, s.n_draws);
  return rep;
}

}  // namespace massweight

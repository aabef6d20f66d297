#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "massweight/count_table.hpp"
#include "massweight/errors.hpp"
#include "massweight/estimator.hpp"
#include "massweight/format.hpp"
#include "massweight/rng.hpp"
#include "massweight/types.hpp"
#include "massweight/zsolver.hpp"

namespace massweight {

/// Cap on the number of multinomial outcomes an exact enumeration may
/// visit. Coverage, not scale, is the oracle's job.
inline constexpr std::uint64_t kEnumerationCap = 1'000'000;

inline constexpr std::size_t kMaxExactDomain = 12;

/// A fully explicit distribution: every point of the domain with its mass
/// and f-value. The normalization constant is known by construction.
struct ExplicitDomain {
  VectorXd masses;
  VectorXd fvalues;

  double norm_constant() const { return masses.sum(); }

  void validate() const {
    if (masses.size() == 0) throw DimensionError("ExplicitDomain: empty");
    if (masses.size() > static_cast<Eigen::Index>(kMaxExactDomain))
      throw TooLarge("ExplicitDomain: more than 12 points");
    if (fvalues.size() != masses.size())
      throw DimensionError("ExplicitDomain: fvalues size mismatch");
    if ((masses.array() <= 0.0).any())
      throw InvalidRecord("ExplicitDomain: masses must be positive");
  }
};

enum class EstimatorKind { blue, new_known_z, new_solved_z };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::blue: return "blue";
    case EstimatorKind::new_known_z: return "new_known_z";
    case EstimatorKind::new_solved_z: return "new_solved_z";
  }
  return "?";
}

/// Exact mean and covariance of a per-point estimator vector, obtained by
/// summing over every multinomial outcome.
struct ExactMoments {
  VectorXd mean;
  MatrixXd covariance;
  EstimatorKind kind = EstimatorKind::blue;
};

// ---------------------------------------------------------------------------
// Multinomial enumeration
// ---------------------------------------------------------------------------

/// Number of count vectors with k nonnegative parts summing to n:
/// C(n+k-1, k-1). Saturates at 2^64-1 on overflow.
inline std::uint64_t composition_count(std::uint64_t n, std::uint64_t k) {
  if (k == 0) return 0;
  // C(n+k-1, k-1) computed incrementally; saturate instead of overflowing.
  long double c = 1.0L;
  for (std::uint64_t j = 1; j < k; ++j) c = c * static_cast<long double>(n + j) / j;
  if (c > 1.8e19L) return ~0ULL;
  return static_cast<std::uint64_t>(c + 0.5L);
}

namespace detail {

inline double factorial_table(std::uint64_t m) {
  static const double fact[19] = {1.0,
                                  1.0,
                                  2.0,
                                  6.0,
                                  24.0,
                                  120.0,
                                  720.0,
                                  5040.0,
                                  40320.0,
                                  362880.0,
                                  3628800.0,
                                  39916800.0,
                                  479001600.0,
                                  6227020800.0,
                                  87178291200.0,
                                  1307674368000.0,
                                  20922789888000.0,
                                  355687428096000.0,
                                  6402373705728000.0};
  return fact[m];
}

/// Visits every count vector with `size` parts summing to n, in
/// lexicographic order of (c_0, c_1, ...).
template <class Fn>
void for_each_composition(std::size_t size, std::uint64_t n, Fn&& fn) {
  std::vector<std::uint64_t> counts(size, 0);
  auto recurse = [&](auto&& self, std::size_t idx, std::uint64_t remaining) -> void {
    if (idx + 1 == size) {
      counts[idx] = remaining;
      fn(counts);
      return;
    }
    for (std::uint64_t v = 0; v <= remaining; ++v) {
      counts[idx] = v;
      self(self, idx + 1, remaining - v);
    }
  };
  recurse(recurse, 0, n);
}

}  // namespace detail

/// Probability of a specific count vector under n draws from
/// masses/norm_constant: Munom(c) * prod (p_i/Z)^c_i.
inline double outcome_probability(const ExplicitDomain& domain,
                                  const std::vector<std::uint64_t>& counts,
                                  std::uint64_t n) {
  const double z = domain.norm_constant();
  if (n <= 18) {
    double coef = detail::factorial_table(n);
    double prob = 1.0;
    for (Eigen::Index i = 0; i < domain.masses.size(); ++i) {
      const std::uint64_t c = counts[static_cast<std::size_t>(i)];
      coef /= detail::factorial_table(c);
      const double pi = domain.masses(i) / z;
      for (std::uint64_t j = 0; j < c; ++j) prob *= pi;
    }
    return coef * prob;
  }
  double lw = std::lgamma(static_cast<double>(n) + 1.0);
  for (Eigen::Index i = 0; i < domain.masses.size(); ++i) {
    const double c = static_cast<double>(counts[static_cast<std::size_t>(i)]);
    lw -= std::lgamma(c + 1.0);
    if (c > 0.0) lw += c * std::log(domain.masses(i) / z);
  }
  return std::exp(lw);
}

/// Calls fn(counts, probability) for every outcome of n draws.
/// Throws TooLarge beyond the enumeration cap.
template <class Fn>
void for_each_outcome(const ExplicitDomain& domain, std::uint64_t n, Fn&& fn) {
  domain.validate();
  const std::uint64_t total =
      composition_count(n, static_cast<std::uint64_t>(domain.masses.size()));
  if (total > kEnumerationCap)
    throw TooLarge("enumeration of " + std::to_string(total) +
                   " outcomes exceeds the cap of " + std::to_string(kEnumerationCap));
  detail::for_each_composition(static_cast<std::size_t>(domain.masses.size()), n,
                               [&](const std::vector<std::uint64_t>& counts) {
                                 fn(counts, outcome_probability(domain, counts, n));
                               });
}

/// Materialized enumeration, mostly for audits and small checks.
inline std::vector<std::pair<VectorXi, double>> enumerate_counts(
    const ExplicitDomain& domain, std::uint64_t n) {
  std::vector<std::pair<VectorXi, double>> out;
  for_each_outcome(domain, n, [&](const std::vector<std::uint64_t>& counts, double prob) {
    VectorXi c(domain.masses.size());
    for (Eigen::Index i = 0; i < c.size(); ++i)
      c(i) = static_cast<int>(counts[static_cast<std::size_t>(i)]);
    out.emplace_back(std::move(c), prob);
  });
  return out;
}

namespace detail {

/// Per-point applied-weight vector X for one outcome, such that the final
/// estimate is X . f. blue: c/n. new_known_z: w/Z with the true Z.
/// new_solved_z: w/z with z re-solved from the outcome, using the
/// prescribed fallbacks for non-regular outcomes.
inline VectorXd outcome_estimator_vector(const ExplicitDomain& domain,
                                         const std::vector<std::uint64_t>& counts,
                                         std::uint64_t n, EstimatorKind kind) {
  const Eigen::Index k = domain.masses.size();
  VectorXd x = VectorXd::Zero(k);
  switch (kind) {
    case EstimatorKind::blue: {
      for (Eigen::Index i = 0; i < k; ++i)
        x(i) = static_cast<double>(counts[static_cast<std::size_t>(i)]) /
               static_cast<double>(n);
      return x;
    }
    case EstimatorKind::new_known_z: {
      const double z = domain.norm_constant();
      for (Eigen::Index i = 0; i < k; ++i) {
        if (counts[static_cast<std::size_t>(i)] == 0) continue;
        const double p = domain.masses(i);
        x(i) = p / inclusion_prob(p, z, n) / z;
      }
      return x;
    }
    case EstimatorKind::new_solved_z:
      break;
  }
  // Solved z: classify the outcome and apply the estimator exactly as the
  // sampling procedure would.
  SampleSummary s;
  s.n_draws = n;
  std::vector<double> sub;
  for (Eigen::Index i = 0; i < k; ++i) {
    const std::uint64_t c = counts[static_cast<std::size_t>(i)];
    if (c == 0) continue;
    s.n_distinct += 1;
    s.n_singletons += (c == 1) ? 1 : 0;
    s.mass_on_sample += domain.masses(i);
    sub.push_back(domain.masses(i));
  }
  switch (classify(s)) {
    case BoundaryCase::empty:
      return x;  // n >= 1, cannot happen
    case BoundaryCase::single_draw:
    case BoundaryCase::concentrated: {
      for (Eigen::Index i = 0; i < k; ++i)
        if (counts[static_cast<std::size_t>(i)] > 0) x(i) = 1.0;
      return x;
    }
    case BoundaryCase::all_distinct: {
      for (Eigen::Index i = 0; i < k; ++i)
        x(i) = static_cast<double>(counts[static_cast<std::size_t>(i)]) /
               static_cast<double>(n);
      return x;
    }
    case BoundaryCase::regular:
      break;
  }
  const ZSolution zsol = solve_z(s, sub);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (counts[static_cast<std::size_t>(i)] == 0) continue;
    const double p = domain.masses(i);
    x(i) = p / inclusion_prob(p, zsol.z, n) / zsol.z;
  }
  return x;
}

}  // namespace detail

/// Exact mean and covariance of the chosen per-point estimator vector by
/// full enumeration.
inline ExactMoments exact_moments(const ExplicitDomain& domain, std::uint64_t n,
                                  EstimatorKind kind) {
  const Eigen::Index k = domain.masses.size();
  ExactMoments m;
  m.kind = kind;
  m.mean = VectorXd::Zero(k);
  MatrixXd second = MatrixXd::Zero(k, k);
  for_each_outcome(domain, n, [&](const std::vector<std::uint64_t>& counts, double prob) {
    const VectorXd x = detail::outcome_estimator_vector(domain, counts, n, kind);
    m.mean += prob * x;
    second += prob * (x * x.transpose());
  });
  m.covariance = second - m.mean * m.mean.transpose();
  return m;
}

/// Audit dump: one row per outcome with its probability and both final
/// estimates (the solved-z procedure for the new estimator).
inline void write_oracle_csv(std::ostream& out, const ExplicitDomain& domain,
                             std::uint64_t n) {
  out << "outcome,probability,estimate_blue,estimate_new\n";
  for_each_outcome(domain, n, [&](const std::vector<std::uint64_t>& counts, double prob) {
    std::string outcome;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (i) outcome.push_back('|');
      outcome += std::to_string(counts[i]);
    }
    const VectorXd xb =
        detail::outcome_estimator_vector(domain, counts, n, EstimatorKind::blue);
    const VectorXd xn =
        detail::outcome_estimator_vector(domain, counts, n, EstimatorKind::new_solved_z);
    out << outcome << ',' << format_g17(prob) << ',' << format_g17(xb.dot(domain.fvalues))
        << ',' << format_g17(xn.dot(domain.fvalues)) << '\n';
  });
}

// ---------------------------------------------------------------------------
// Seeded Monte Carlo replication
// ---------------------------------------------------------------------------

struct ReplicateRow {
  double fbar_new = 0.0;
  double fbar_blue = 0.0;
  double z = 0.0;
  BoundaryCase boundary = BoundaryCase::empty;
};

struct EstimatorStats {
  double mean = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
};

struct ReplicateStats {
  std::uint64_t replicates = 0;
  EstimatorStats nw;    // mass-weighted estimator
  EstimatorStats blue;  // plain average
  double variance_ratio_new_over_blue = 0.0;
};

/// Draws a point index proportional to the domain masses; keys are the
/// one-byte index.
struct DomainSampler {
  const ExplicitDomain* domain;
  std::vector<double> cumulative;

  explicit DomainSampler(const ExplicitDomain& d) : domain(&d) {
    d.validate();
    cumulative.resize(static_cast<std::size_t>(d.masses.size()));
    double run = 0.0;
    for (Eigen::Index i = 0; i < d.masses.size(); ++i) {
      run += d.masses(i);
      cumulative[static_cast<std::size_t>(i)] = run;
    }
  }

  SampleRecord operator()(SplitMix64& rng) const {
    const double x = rng.next_double() * cumulative.back();
    std::size_t idx = 0;
    while (idx + 1 < cumulative.size() && cumulative[idx] <= x) ++idx;
    return SampleRecord{std::string(1, static_cast<char>(idx)),
                        domain->masses(static_cast<Eigen::Index>(idx)),
                        domain->fvalues(static_cast<Eigen::Index>(idx))};
  }
};

/// Runs `replicates` independent experiments of n draws each and returns
/// the per-replicate estimates in replicate order. Replicate r always uses
/// stream_rng(seed, r), so the result is identical for any thread count.
template <class Sampler>
std::vector<ReplicateRow> run_replicates(const Sampler& sampler, std::uint64_t n,
                                         std::uint64_t replicates, std::uint64_t seed,
                                         unsigned threads = 1) {
  std::vector<ReplicateRow> rows(replicates);
  auto work = [&](std::uint64_t begin, std::uint64_t end) {
    for (std::uint64_t r = begin; r < end; ++r) {
      SplitMix64 rng = stream_rng(seed, r);
      MassTable table;
      for (std::uint64_t j = 0; j < n; ++j) table.insert(sampler(rng));
      const ZSolution zsol = solve_z(table);
      ReplicateRow& row = rows[r];
      row.fbar_new = estimate_new(table, zsol);
      row.fbar_blue = estimate_blue(table);
      row.z = zsol.z;
      row.boundary = zsol.boundary;
    }
  };
  const unsigned t =
      std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(replicates)));
  if (t == 1) {
    work(0, replicates);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(t);
    const std::uint64_t chunk = (replicates + t - 1) / t;
    for (unsigned i = 0; i < t; ++i) {
      const std::uint64_t begin = i * chunk;
      const std::uint64_t end = std::min(replicates, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return rows;
}

inline ReplicateStats summarize_replicates(const std::vector<ReplicateRow>& rows) {
  if (rows.size() < 2) throw DimensionError("summarize_replicates: need >= 2 replicates");
  ReplicateStats s;
  s.replicates = rows.size();
  const double r = static_cast<double>(rows.size());
  double mn = 0.0, mb = 0.0;
  for (const auto& row : rows) {
    mn += row.fbar_new;
    mb += row.fbar_blue;
  }
  mn /= r;
  mb /= r;
  double vn = 0.0, vb = 0.0;
  for (const auto& row : rows) {
    vn += (row.fbar_new - mn) * (row.fbar_new - mn);
    vb += (row.fbar_blue - mb) * (row.fbar_blue - mb);
  }
  vn /= (r - 1.0);
  vb /= (r - 1.0);
  s.nw = {mn, vn, std::sqrt(vn / r)};
  s.blue = {mb, vb, std::sqrt(vb / r)};
  s.variance_ratio_new_over_blue = (vb > 0.0) ? vn / vb : (vn > 0.0 ? HUGE_VAL : 0.0);
  return s;
}

/// Replication over an explicit domain (draws i ~ p/Z).
inline ReplicateStats replicate_mc(const ExplicitDomain& domain, std::uint64_t n,
                                   std::uint64_t replicates, std::uint64_t seed,
                                   unsigned threads = 1) {
  const DomainSampler sampler(domain);
  return summarize_replicates(run_replicates(sampler, n, replicates, seed, threads));
}

// ---------------------------------------------------------------------------
// Formula-vs-enumeration agreement suite
// ---------------------------------------------------------------------------

struct AgreementOptions {
  int max_size = 4;
  std::uint64_t max_draws = 6;
  std::uint64_t trials = 200;
  std::uint64_t seed = 1;
  double tol = 1e-12;
  double mass_log10_min = -3.0;  // masses log-uniform in [10^min, 10^max]
  double mass_log10_max = 0.0;
};

struct AgreementResult {
  bool pass = true;
  double worst_abs_diff = 0.0;
  std::string worst_what;
  VectorXd worst_masses;
  std::uint64_t worst_draws = 0;
};

/// Random small domains: exact enumeration moments must reproduce the
/// closed-form mean and covariance of both estimators entrywise.
inline AgreementResult run_oracle_agreement(const AgreementOptions& opt) {
  AgreementResult res;
  SplitMix64 rng = stream_rng(opt.seed, 0xA93Eu);
  auto note = [&](double diff, const std::string& what, const ExplicitDomain& d,
                  std::uint64_t n) {
    if (diff > res.worst_abs_diff) {
      res.worst_abs_diff = diff;
      res.worst_what = what;
      res.worst_masses = d.masses;
      res.worst_draws = n;
    }
  };
  for (std::uint64_t trial = 0; trial < opt.trials; ++trial) {
    const int size = 1 + static_cast<int>(rng.next() % static_cast<std::uint64_t>(opt.max_size));
    const std::uint64_t n = 1 + rng.next() % opt.max_draws;
    ExplicitDomain d;
    d.masses.resize(size);
    d.fvalues.resize(size);
    for (int i = 0; i < size; ++i) {
      const double e =
          opt.mass_log10_min + (opt.mass_log10_max - opt.mass_log10_min) * rng.next_double();
      d.masses(i) = std::pow(10.0, e);
      d.fvalues(i) = 2.0 * rng.next_double() - 1.0;
    }
    const double z = d.norm_constant();

    double prob_total = 0.0;
    for_each_outcome(d, n,
                     [&](const std::vector<std::uint64_t>&, double p) { prob_total += p; });
    note(std::abs(prob_total - 1.0), "sum of outcome probabilities vs 1", d, n);

    const VectorXd expected_mean = d.masses / z;

    const ExactMoments blue = exact_moments(d, n, EstimatorKind::blue);
    note((blue.mean - expected_mean).cwiseAbs().maxCoeff(), "blue mean vs p/Z", d, n);
    const MatrixXd cb = cov_matrix_blue<double>(d.masses, z, n);
    note((blue.covariance - cb).cwiseAbs().maxCoeff(), "blue covariance vs closed form", d,
         n);

    const ExactMoments nk = exact_moments(d, n, EstimatorKind::new_known_z);
    note((nk.mean - expected_mean).cwiseAbs().maxCoeff(), "weighted mean vs p/Z", d, n);
    const MatrixXd cn = cov_matrix_new<double>(d.masses, z, n);
    note((nk.covariance - cn).cwiseAbs().maxCoeff(), "weighted covariance vs closed form",
         d, n);
  }
  res.pass = res.worst_abs_diff <= opt.tol;
  return res;
}

}  // namespace massweight

#pragma once

// Exponential-race global coupling on a finite support.
//
// One family of i.i.d. Exp(1) variates (eps_a) is fixed per seed; every
// probability vector p is then sampled as argmin_a eps_a / p(a). The same
// variates serve all p at once, so two close vectors usually pick the same
// atom. The API takes finite vectors; the countable case differs only in
// needing a lazy tail, which the point-process coupler already provides.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "gcoupling/errors.hpp"
#include "gcoupling/measure.hpp"
#include "gcoupling/random.hpp"
#include "gcoupling/stats.hpp"

namespace gcoupling {

/// Seed-determined family of Exp(1) variates, one per atom, derived lazily.
class RaceSource {
 public:
  explicit constexpr RaceSource(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  double variate(std::size_t atom) const noexcept {
    KeyedStream s(stream_key(seed_, "race", static_cast<std::uint64_t>(atom)));
    return s.exponential();
  }

 private:
  std::uint64_t seed_;
};

namespace detail {

inline void validate_weights(std::span<const double> p, const char* what) {
  if (p.empty()) throw DomainError("race", std::string(what) + " is empty");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("race", std::string(what) + " has a negative or non-finite entry");
    total += v;
  }
  if (!(total > 0.0)) throw DomainError("race", std::string(what) + " is all zero");
}

inline void validate_probability(std::span<const double> p, const char* what) {
  validate_weights(p, what);
  double total = 0.0;
  for (double v : p) total += v;
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("race", std::string(what) + " does not sum to 1");
}

}  // namespace detail

/// argmin_a eps_a / p(a); atoms with p(a) = 0 are never chosen. Floating
/// ties go to the smallest index. Accepts unnormalized nonnegative weights,
/// since the argmin is invariant under scaling.
inline std::size_t race_sample(const RaceSource& src, std::span<const double> p) {
  detail::validate_weights(p, "weight vector");
  std::size_t best = p.size();
  double best_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    const double ratio = src.variate(a) / p[a];
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = a;
    }
  }
  return best;
}

/// Exact P[race_sample(., p) = race_sample(., q)]:
///   sum over a with p(a) q(a) > 0 of 1 / sum_b max(p(b)/p(a), q(b)/q(a)).
inline double race_coincidence_exact(std::span<const double> p, std::span<const double> q) {
  detail::validate_probability(p, "p");
  detail::validate_probability(q, "q");
  if (p.size() != q.size()) throw DomainError("race", "p and q have different supports");
  double total = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0 || q[a] <= 0.0) continue;
    double row = 0.0;
    for (std::size_t b = 0; b < p.size(); ++b) row += std::max(p[b] / p[a], q[b] / q[a]);
    total += 1.0 / row;
  }
  return total;
}

/// Monte Carlo coincidence rate; replica r uses RaceSource(stream_key(seed, "replica", r)).
inline Estimate race_coincidence_mc(std::span<const double> p, std::span<const double> q, std::size_t n_replicas,
                                    std::uint64_t seed) {
  if (n_replicas == 0) throw DomainError("race", "need at least one replica");
  detail::validate_probability(p, "p");
  detail::validate_probability(q, "q");
  if (p.size() != q.size()) throw DomainError("race", "p and q have different supports");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n_replicas; ++r) {
    const RaceSource src(stream_key(seed, "replica", static_cast<std::uint64_t>(r)));
    hits += race_sample(src, p) == race_sample(src, q) ? 1 : 0;
  }
  return binomial_estimate(hits, n_replicas);
}

/// (1 - d) / (1 + d) with d = ‖p − q‖: the guaranteed coincidence floor.
inline double race_lower_bound(std::span<const double> p, std::span<const double> q) {
  const double d = tv_distance(p, q);
  return (1.0 - d) / (1.0 + d);
}

}  // namespace gcoupling

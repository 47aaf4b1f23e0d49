#pragma once

// The global coupling x_f(U): the first point of U under the graph of f.
// One source serves every probability density on its space.

#include <cstdint>
#include <vector>

#include "gcoupling/errors.hpp"
#include "gcoupling/measure.hpp"
#include "gcoupling/ppp.hpp"
#include "gcoupling/stats.hpp"

namespace gcoupling {

struct CoupledSample {
  State x = 0.0;
  double t = 0.0;
  double region_measure = 0.0;
};

inline CoupledSample couple(const PointProcessSource& src, const Density& f) {
  if (!f.is_probability()) throw DomainError("coupler", "couple needs a probability density");
  const Region region(f);
  const FirstPoint p = src.first_point_in(region);
  return {p.x, p.t, region.measure()};
}

struct CoincidenceReport {
  std::size_t replicas = 0;
  Estimate t_coincidence;
  Estimate x_coincidence;
  double exact = 0.0;  // (1 - d) / (1 + d)
  double tv = 0.0;
  /// Seeds where t_f = t_g but x_f != x_g; must stay empty.
  std::vector<std::uint64_t> inclusion_violations;
};

/// Per-seed joint query of D_f and D_g over seeds [first_seed, first_seed + count).
inline CoincidenceReport coincidence_curve(std::uint64_t first_seed, std::size_t count, const Density& f, const Density& g) {
  if (!f.is_probability() || !g.is_probability())
    throw DomainError("coupler", "coincidence curve needs probability densities");
  if (count == 0) throw DomainError("coupler", "empty seed range");
  const std::vector<Region> regions{Region(f), Region(g)};
  std::size_t t_hits = 0, x_hits = 0;
  CoincidenceReport out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = first_seed + i;
    const PointProcessSource src(seed, f.space_ptr());
    const auto pts = src.joint_first_points(regions);
    const bool t_eq = pts[0].t == pts[1].t;
    const bool x_eq = pts[0].x == pts[1].x;
    t_hits += t_eq;
    x_hits += x_eq;
    if (t_eq && !x_eq) out.inclusion_violations.push_back(seed);
  }
  out.replicas = count;
  out.t_coincidence = binomial_estimate(t_hits, count);
  out.x_coincidence = binomial_estimate(x_hits, count);
  out.tv = tv_distance(f, g);
  out.exact = (1.0 - out.tv) / (1.0 + out.tv);
  return out;
}

}  // namespace gcoupling

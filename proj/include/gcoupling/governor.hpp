#pragma once

// Innovation extraction: rebuild a governing sequence (U_n) from an observed
// path so that the coupling recursion X_n = couple(U_n, f(.|X_{<n})).x
// reproduces the path exactly.
//
// U_n is a fresh source W_n whose first point under the graph of f_{n-1} is
// replaced by (X_n, V_n f_{n-1}(X_n)); W_n and V_n come from their own
// substreams of (seed, n). A GoverningSequence holds only the sources, so
// code that receives one cannot read the path.

#include <cstdint>
#include <string>
#include <vector>

#include "gcoupling/chain.hpp"
#include "gcoupling/coupler.hpp"
#include "gcoupling/errors.hpp"
#include "gcoupling/ppp.hpp"
#include "gcoupling/random.hpp"
#include "gcoupling/stats.hpp"

namespace gcoupling {

class GoverningSequence {
 public:
  GoverningSequence() = default;
  GoverningSequence(std::int64_t origin, std::vector<PointProcessSource> sources, std::vector<char> recursion_ok = {})
      : origin_(origin), sources_(std::move(sources)), recursion_ok_(std::move(recursion_ok)) {
    if (recursion_ok_.empty()) recursion_ok_.assign(sources_.size(), 1);
  }

  std::int64_t origin() const noexcept { return origin_; }
  std::int64_t end() const noexcept { return origin_ + static_cast<std::int64_t>(sources_.size()); }
  std::size_t size() const noexcept { return sources_.size(); }

  const PointProcessSource& at(std::int64_t n) const {
    if (n < origin_ || n >= end())
      throw DomainError("governor", "no innovation stored for time " + std::to_string(n));
    return sources_[static_cast<std::size_t>(n - origin_)];
  }
  const PointProcessSource& operator()(std::int64_t n) const { return at(n); }

  /// U_{a:b} as a contiguous span.
  std::span<const PointProcessSource> window(std::int64_t a, std::int64_t b) const {
    if (a < origin_ || b >= end() || b < a - 1) throw DomainError("governor", "innovation window out of range");
    return std::span<const PointProcessSource>(sources_).subspan(static_cast<std::size_t>(a - origin_),
                                                                static_cast<std::size_t>(b - a + 1));
  }

  /// Per-index flag: couple(U_n, f_{n-1}).x == X_n held at extraction.
  const std::vector<char>& recursion_ok() const noexcept { return recursion_ok_; }
  bool all_recursions_ok() const noexcept {
    for (char c : recursion_ok_)
      if (!c) return false;
    return true;
  }

 private:
  std::int64_t origin_ = 0;
  std::vector<PointProcessSource> sources_;
  std::vector<char> recursion_ok_;
};

/// U_n for n in [from, path.end()), with f_{n-1} = f(.|X_{origin:n-1}).
/// `from` defaults to the path origin.
inline GoverningSequence extract_innovations(const ChainModel& model, const Path& path, std::uint64_t seed,
                                             std::optional<std::int64_t> from = std::nullopt) {
  const std::int64_t first = from.value_or(path.origin);
  if (first < path.origin || first > path.end()) throw DomainError("governor", "extraction start outside the path");
  std::vector<PointProcessSource> sources;
  std::vector<char> ok;
  sources.reserve(static_cast<std::size_t>(path.end() - first));
  for (std::int64_t n = first; n < path.end(); ++n) {
    const Density f = model.kernel_on_tail(path.before(n));
    const State x = path.at(n);
    if (!f.space().contains(x) || !(f(x) > 0.0))
      throw InadmissiblePath(n, "kernel vanishes at the observed symbol");
    const auto un = static_cast<std::uint64_t>(n);
    const PointProcessSource w = PointProcessSource::from_key(stream_key(seed, "W", un), model.space());
    const double v = KeyedStream(stream_key(seed, "uniform", un)).uniform();
    const Region region(f);
    PointProcessSource u = w.splice(region, x, v);
    ok.push_back(u.first_point_in(region).x == x ? 1 : 0);
    sources.push_back(std::move(u));
  }
  return GoverningSequence(first, std::move(sources), std::move(ok));
}

/// Runs the recursion on extracted innovations after the given prefix.
inline Path replay(const ChainModel& model, const GoverningSequence& u, Path prefix = {}) {
  if (prefix.values.empty()) prefix.origin = u.origin();
  return simulate_path(model, u, u.origin(), u.end() - 1, std::move(prefix));
}

struct GovernDiagnostics {
  std::size_t steps = 0;
  std::size_t recursion_failures = 0;
  /// t of the first point of U_n under f_{n-1}, against Exp(mass).
  TestResult first_time_ks;
  /// Points of U_n in the box E x [0, box_height) x [0, box_time).
  double box_height = 1.0;
  double box_time = 2.0;
  double box_expected = 0.0;
  Estimate box_mean;
  TestResult box_dispersion;
  /// corr(X_{n-1}, t of U_n under the uniform density) and corr of box
  /// counts at consecutive times.
  double corr_past_time = 0.0;
  double corr_lag_box = 0.0;
  double corr_bound = 0.0;  // 4 / sqrt(N)
};

/// Law checks on extracted innovations. `path` must be the path `u` was
/// extracted from, with u.origin() > path.origin.
inline GovernDiagnostics govern_diagnostics(const ChainModel& model, const Path& path, const GoverningSequence& u) {
  if (u.origin() <= path.origin || u.end() != path.end())
    throw DomainError("governor", "diagnostics need innovations extracted after the first path symbol");
  GovernDiagnostics d;
  const SpacePtr& space = model.space();
  const Region uniform(Density::uniform(space));
  std::vector<double> first_times, box_counts, past, probe_times;
  for (std::int64_t n = u.origin(); n < u.end(); ++n) {
    const PointProcessSource& src = u.at(n);
    const Density f = model.kernel_on_tail(path.before(n));
    first_times.push_back(src.first_point_in(Region(f)).t * f.mass());
    const auto pts = src.points_in_window(d.box_height, d.box_time);
    box_counts.push_back(static_cast<double>(pts.size()));
    past.push_back(path.at(n - 1));
    probe_times.push_back(src.first_point_in(uniform).t);
  }
  d.steps = first_times.size();
  for (char c : u.recursion_ok()) d.recursion_failures += c ? 0 : 1;
  d.first_time_ks = ks_test(first_times, [](double t) { return t <= 0.0 ? 0.0 : 1.0 - std::exp(-t); });
  d.box_expected = space->total_measure() * d.box_height * d.box_time;
  d.box_mean = mean_estimate(box_counts);
  d.box_dispersion = poisson_dispersion(box_counts);
  d.corr_past_time = correlation(past, probe_times);
  if (box_counts.size() > 2)
    d.corr_lag_box = correlation(std::span<const double>(box_counts).first(box_counts.size() - 1),
                                 std::span<const double>(box_counts).subspan(1));
  d.corr_bound = 4.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(d.steps, 1)));
  return d;
}

}  // namespace gcoupling

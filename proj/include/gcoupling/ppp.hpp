#pragma once

// Lazily materialized Poisson point process on E x R+ x R+ with intensity
// pi ⊗ λ ⊗ λ.
//
// The process is cut into blocks E x [k, k+1) x [j w, (j+1) w) (y-strip k,
// time slab j, slab width w). The points of a block are a pure function of
// (key, k, j): a Poisson(pi(E) w) count followed by i.i.d. positions drawn
// from pi/pi(E) and uniform y, t. Any query therefore sees the same points in
// a block regardless of what else was asked before, which is what lets one
// source answer for every density at once.
//
// A spliced view carries a list of edits (remove one point, add another in
// the same time slab) applied on top of the base blocks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <tuple>
#include <vector>

#include "gcoupling/errors.hpp"
#include "gcoupling/measure.hpp"
#include "gcoupling/random.hpp"

namespace gcoupling {

struct ProcessPoint {
  State x = 0.0;
  double y = 0.0;
  double t = 0.0;

  bool operator==(const ProcessPoint&) const = default;
};

/// The point of a region with the smallest time coordinate.
using FirstPoint = ProcessPoint;

/// Lexicographic (t, y, x) order; ties in t have probability zero.
inline bool earlier(const ProcessPoint& a, const ProcessPoint& b) noexcept {
  return std::tie(a.t, a.y, a.x) < std::tie(b.t, b.y, b.x);
}

/// One splice: `removed` (first point of the region) replaced by `added`,
/// both in time slab `slab`.
struct SpliceEdit {
  ProcessPoint removed;
  std::uint64_t removed_strip = 0;
  ProcessPoint added;
  std::uint64_t added_strip = 0;
  std::uint64_t slab = 0;

  bool operator==(const SpliceEdit&) const = default;
};

class PointProcessSource {
 public:
  PointProcessSource(std::uint64_t seed, SpacePtr space, double slab_width = 1.0)
      : PointProcessSource(from_key(stream_key(seed, "ppp"), std::move(space), slab_width)) {}

  /// Builds a source directly from an already-derived stream key.
  static PointProcessSource from_key(std::uint64_t key, SpacePtr space, double slab_width = 1.0) {
    if (!space) throw DomainError("ppp", "point process needs a state space");
    if (!(slab_width > 0.0) || !std::isfinite(slab_width)) throw DomainError("ppp", "slab width must be positive");
    return PointProcessSource(key, std::move(space), slab_width, nullptr);
  }

  const StateSpace& space() const noexcept { return *space_; }
  const SpacePtr& space_ptr() const noexcept { return space_; }
  double slab_width() const noexcept { return slab_width_; }
  std::uint64_t key() const noexcept { return key_; }
  std::size_t edit_count() const noexcept { return edits_ ? edits_->size() : 0; }

  /// Splice history, oldest first.
  std::vector<SpliceEdit> edits() const { return edits_ ? *edits_ : std::vector<SpliceEdit>{}; }

  /// Rebuilds a spliced view from its key and splice history.
  static PointProcessSource from_edits(std::uint64_t key, SpacePtr space, double slab_width, std::vector<SpliceEdit> edits) {
    PointProcessSource base = from_key(key, std::move(space), slab_width);
    if (!edits.empty()) base.edits_ = std::make_shared<const std::vector<SpliceEdit>>(std::move(edits));
    return base;
  }

  /// Points of block (strip, slab), edits applied.
  void block(std::uint64_t strip, std::uint64_t slab, std::vector<ProcessPoint>& out) const {
    out.clear();
    KeyedStream rng(stream_key(key_, strip, slab));
    const std::uint64_t n = rng.poisson(space_->total_measure() * slab_width_);
    const double y0 = static_cast<double>(strip);
    const double t0 = static_cast<double>(slab);
    for (std::uint64_t i = 0; i < n; ++i) {
      ProcessPoint p;
      p.x = space_->sample(rng);
      p.y = y0 + rng.uniform();
      p.t = (t0 + rng.uniform()) * slab_width_;
      out.push_back(p);
    }
    if (!edits_) return;
    for (const SpliceEdit& e : *edits_) {
      if (e.slab != slab) continue;
      if (e.removed_strip == strip) {
        auto it = std::find(out.begin(), out.end(), e.removed);
        if (it != out.end()) out.erase(it);
      }
      if (e.added_strip == strip) out.push_back(e.added);
    }
  }

  std::vector<ProcessPoint> block(std::uint64_t strip, std::uint64_t slab) const {
    std::vector<ProcessPoint> out;
    block(strip, slab, out);
    return out;
  }

  /// Every point with y < y_max and t < t_max.
  std::vector<ProcessPoint> points_in_window(double y_max, double t_max) const {
    std::vector<ProcessPoint> out, buf;
    const auto strips = static_cast<std::uint64_t>(std::ceil(y_max));
    const auto slabs = static_cast<std::uint64_t>(std::ceil(t_max / slab_width_));
    for (std::uint64_t j = 0; j < slabs; ++j)
      for (std::uint64_t k = 0; k < strips; ++k) {
        block(k, j, buf);
        for (const auto& p : buf)
          if (p.y < y_max && p.t < t_max) out.push_back(p);
      }
    return out;
  }

  FirstPoint first_point_in(const Region& region) const { return locate_first(std::span<const Region>(&region, 1))[0].point; }

  /// Answers every region from the same point set.
  std::vector<FirstPoint> joint_first_points(std::span<const Region> regions) const {
    std::vector<FirstPoint> out;
    for (const auto& l : locate_first(regions)) out.push_back(l.point);
    return out;
  }

  /// A view whose first point in `region` is replaced by (x_star, v f(x_star), t_region).
  PointProcessSource splice(const Region& region, State x_star, double v) const {
    if (!space_->contains(x_star)) throw DomainError("ppp", "splice point lies outside the state space");
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("ppp", "splice height fraction must lie in [0,1]");
    const double fx = region.density()(x_star);
    if (!(fx > 0.0)) throw DomainError("ppp", "region density vanishes at the splice point");
    const Located first = locate_first(std::span<const Region>(&region, 1))[0];
    SpliceEdit e;
    e.removed = first.point;
    e.removed_strip = first.strip;
    e.slab = first.slab;
    e.added = ProcessPoint{x_star, v * fx, first.point.t};
    e.added_strip = static_cast<std::uint64_t>(std::floor(e.added.y));
    auto edits = edits_ ? std::make_shared<std::vector<SpliceEdit>>(*edits_) : std::make_shared<std::vector<SpliceEdit>>();
    edits->push_back(e);
    return PointProcessSource(key_, space_, slab_width_, std::move(edits));
  }

 private:
  struct Located {
    ProcessPoint point;
    std::uint64_t strip = 0;
    std::uint64_t slab = 0;
  };

  PointProcessSource(std::uint64_t key, SpacePtr space, double slab_width, std::shared_ptr<const std::vector<SpliceEdit>> edits)
      : key_(key), space_(std::move(space)), slab_width_(slab_width), edits_(std::move(edits)) {}

  // Enumerates slabs in time order; inside a slab, every strip below the
  // tallest envelope. The first slab holding a point of a region settles that
  // region, since later slabs only contain later times.
  std::vector<Located> locate_first(std::span<const Region> regions) const {
    if (regions.empty()) return {};
    double tallest = 0.0;
    double smallest_measure = std::numeric_limits<double>::infinity();
    for (const Region& r : regions) {
      if (r.density().space_ptr() != space_ && !(r.density().space() == *space_))
        throw DomainError("ppp", "region lives on a different state space");
      tallest = std::max(tallest, r.density().envelope().sup());
      smallest_measure = std::min(smallest_measure, r.measure());
    }
    const auto strips = static_cast<std::uint64_t>(std::ceil(tallest));
    const double expected_slabs = 1.0 / (smallest_measure * slab_width_);
    const auto slab_limit = static_cast<std::uint64_t>(std::min(1e9, 1e3 * expected_slabs + 1e4));

    std::vector<Located> best(regions.size());
    std::vector<bool> found(regions.size(), false);
    std::vector<bool> settled(regions.size(), false);
    std::size_t open = regions.size();
    std::vector<ProcessPoint> buf;
    buf.reserve(16);
    for (std::uint64_t j = 0; open > 0; ++j) {
      if (j > slab_limit) throw DomainError("ppp", "no point found in region within the slab budget");
      for (std::uint64_t k = 0; k < strips; ++k) {
        block(k, j, buf);
        for (const ProcessPoint& p : buf) {
          const std::size_t cell = space_->cell_of(p.x);
          for (std::size_t i = 0; i < regions.size(); ++i) {
            if (settled[i]) continue;
            const Density& f = regions[i].density();
            if (p.y > f.envelope().at_cell(cell) || p.y > f(p.x)) continue;
            if (!found[i] || earlier(p, best[i].point)) {
              best[i] = Located{p, k, j};
              found[i] = true;
            }
          }
        }
      }
      for (std::size_t i = 0; i < regions.size(); ++i)
        if (found[i] && !settled[i]) {
          settled[i] = true;
          --open;
        }
    }
    return best;
  }

  std::uint64_t key_;
  SpacePtr space_;
  double slab_width_;
  std::shared_ptr<const std::vector<SpliceEdit>> edits_;
};

inline FirstPoint first_point_in(const PointProcessSource& src, const Region& region) { return src.first_point_in(region); }

inline std::vector<FirstPoint> joint_first_points(const PointProcessSource& src, std::span<const Region> regions) {
  return src.joint_first_points(regions);
}

inline PointProcessSource splice(const PointProcessSource& src, const Region& region, State x_star, double v) {
  return src.splice(region, x_star, v);
}

}  // namespace gcoupling

#pragma once

// Reference measures, densities with piecewise-constant envelopes, and the
// total-variation / subgraph-measure computations built on them.
//
// Two backends ship: a finite set of atoms with positive weights, and a
// bounded interval whose reference measure has a piecewise-constant density
// with respect to length. Points of either space are carried as `State`
// (an atom index for the discrete backend).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gcoupling/errors.hpp"
#include "gcoupling/random.hpp"

namespace gcoupling {

using State = double;

/// A measured space (E, pi).
class StateSpace {
 public:
  enum class Kind { discrete, interval };

  /// Number of dyadic cells the interval backend is split into.
  static constexpr std::size_t interval_cells = 1024;

  static StateSpace discrete(std::vector<double> weights, std::vector<std::string> labels = {}) {
    if (weights.empty()) throw DomainError("measure", "discrete space needs at least one atom");
    for (double w : weights)
      if (!(w > 0.0) || !std::isfinite(w))
        throw DomainError("measure", "atom weights must be strictly positive and finite");
    if (!labels.empty() && labels.size() != weights.size())
      throw DomainError("measure", "label count differs from atom count");
    StateSpace s;
    s.kind_ = Kind::discrete;
    s.weights_ = std::move(weights);
    s.labels_ = std::move(labels);
    s.finish();
    return s;
  }

  /// Counting measure on `atoms` points.
  static StateSpace counting(std::size_t atoms) { return discrete(std::vector<double>(atoms, 1.0)); }

  /// Uniform probability on `atoms` points.
  static StateSpace uniform_probability(std::size_t atoms) {
    return discrete(std::vector<double>(atoms, 1.0 / static_cast<double>(atoms)));
  }

  /// Interval [lo, hi] with reference density `reference` (equal-width pieces,
  /// a power-of-two count no larger than `interval_cells`) relative to length.
  static StateSpace interval(double lo, double hi, std::vector<double> reference = {1.0}) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw DomainError("measure", "interval needs finite lo < hi");
    const std::size_t pieces = reference.size();
    if (pieces == 0 || pieces > interval_cells || (pieces & (pieces - 1)) != 0)
      throw DomainError("measure", "reference density needs a power-of-two piece count <= 1024");
    for (double w : reference)
      if (!(w > 0.0) || !std::isfinite(w))
        throw DomainError("measure", "reference density must be strictly positive and bounded");
    StateSpace s;
    s.kind_ = Kind::interval;
    s.lo_ = lo;
    s.hi_ = hi;
    s.weights_ = std::move(reference);
    s.finish();
    return s;
  }

  Kind kind() const noexcept { return kind_; }
  bool is_discrete() const noexcept { return kind_ == Kind::discrete; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  std::size_t atom_count() const noexcept { return is_discrete() ? weights_.size() : 0; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  /// Atoms for the discrete backend, dyadic cells for the interval.
  std::size_t cell_count() const noexcept { return is_discrete() ? weights_.size() : interval_cells; }

  double cell_width() const noexcept { return (hi_ - lo_) / static_cast<double>(interval_cells); }

  std::size_t cell_of(State x) const noexcept {
    if (is_discrete()) return static_cast<std::size_t>(x);
    auto c = static_cast<std::ptrdiff_t>(std::floor((x - lo_) / cell_width()));
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(c, 0, interval_cells - 1));
  }

  /// [left, right) of an interval cell.
  std::pair<double, double> cell_bounds(std::size_t c) const noexcept {
    const double w = cell_width();
    return {lo_ + w * static_cast<double>(c),
            c + 1 == interval_cells ? hi_ : lo_ + w * static_cast<double>(c + 1)};
  }

  double cell_measure(std::size_t c) const noexcept {
    if (is_discrete()) return weights_[c];
    return reference_at_cell(c) * cell_width();
  }

  double total_measure() const noexcept { return total_; }
  bool is_probability() const noexcept { return std::abs(total_ - 1.0) <= 1e-12; }

  bool contains(State x) const noexcept {
    if (is_discrete()) {
      return x >= 0.0 && x == std::floor(x) && x < static_cast<double>(weights_.size());
    }
    return x >= lo_ && x <= hi_;
  }

  /// Reference weight pi({a}) for atoms, reference density for intervals.
  double reference_density(State x) const noexcept {
    if (is_discrete()) return weights_[static_cast<std::size_t>(x)];
    return reference_at_cell(cell_of(x));
  }

  const std::vector<double>& weights() const noexcept { return weights_; }

  /// Boundaries of the reference density pieces, including lo and hi.
  std::vector<double> reference_breakpoints() const {
    std::vector<double> out;
    if (is_discrete()) return out;
    const std::size_t pieces = weights_.size();
    for (std::size_t i = 0; i <= pieces; ++i)
      out.push_back(i == pieces ? hi_ : lo_ + (hi_ - lo_) * static_cast<double>(i) / static_cast<double>(pieces));
    return out;
  }

  /// A point drawn from pi / pi(E).
  State sample(KeyedStream& rng) const noexcept {
    const double u = rng.uniform() * total_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    std::size_t i = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cumulative_.begin(), static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
    if (is_discrete()) return static_cast<State>(i);
    const double width = (hi_ - lo_) / static_cast<double>(weights_.size());
    const double left = lo_ + width * static_cast<double>(i);
    return left + width * rng.uniform();
  }

  bool operator==(const StateSpace& other) const {
    return kind_ == other.kind_ && lo_ == other.lo_ && hi_ == other.hi_ && weights_ == other.weights_;
  }

 private:
  StateSpace() = default;

  double reference_at_cell(std::size_t c) const noexcept {
    return weights_[c / (interval_cells / weights_.size())];
  }

  void finish() {
    cumulative_.resize(weights_.size());
    double acc = 0.0;
    const double piece = is_discrete() ? 1.0 : (hi_ - lo_) / static_cast<double>(weights_.size());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      acc += weights_[i] * piece;
      cumulative_[i] = acc;
    }
    total_ = acc;
  }

  Kind kind_ = Kind::discrete;
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<double> weights_;
  std::vector<std::string> labels_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

using SpacePtr = std::shared_ptr<const StateSpace>;

inline SpacePtr make_space(StateSpace s) { return std::make_shared<const StateSpace>(std::move(s)); }

/// Piecewise-constant function over the cells of a space, stored as runs.
class Envelope {
 public:
  Envelope() = default;

  /// `starts` must begin at 0 and be strictly increasing; run i covers
  /// cells [starts[i], starts[i+1]).
  Envelope(std::vector<std::size_t> starts, std::vector<double> values, std::size_t cells)
      : starts_(std::move(starts)), values_(std::move(values)), cells_(cells) {
    if (starts_.empty() || starts_.size() != values_.size() || starts_.front() != 0)
      throw DomainError("measure", "malformed envelope runs");
    for (std::size_t i = 1; i < starts_.size(); ++i)
      if (starts_[i] <= starts_[i - 1] || starts_[i] >= cells_)
        throw DomainError("measure", "envelope runs must be increasing cell indices");
    for (double v : values_)
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("measure", "envelope values must be finite and nonnegative");
  }

  static Envelope constant(double value, std::size_t cells) { return Envelope({0}, {value}, cells); }

  /// Compresses a per-cell vector into runs.
  static Envelope from_cells(std::span<const double> per_cell) {
    std::vector<std::size_t> starts;
    std::vector<double> values;
    for (std::size_t c = 0; c < per_cell.size(); ++c) {
      if (values.empty() || per_cell[c] != values.back()) {
        starts.push_back(c);
        values.push_back(per_cell[c]);
      }
    }
    return Envelope(std::move(starts), std::move(values), per_cell.size());
  }

  double at_cell(std::size_t c) const noexcept {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), c);
    return values_[static_cast<std::size_t>(it - starts_.begin()) - 1];
  }

  double sup() const noexcept { return *std::max_element(values_.begin(), values_.end()); }

  std::vector<double> per_cell() const {
    std::vector<double> out(cells_);
    for (std::size_t i = 0; i < starts_.size(); ++i) {
      const std::size_t end = i + 1 < starts_.size() ? starts_[i + 1] : cells_;
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(starts_[i]), out.begin() + static_cast<std::ptrdiff_t>(end), values_[i]);
    }
    return out;
  }

  double integral(const StateSpace& space) const noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < starts_.size(); ++i) {
      const std::size_t end = i + 1 < starts_.size() ? starts_[i + 1] : cells_;
      for (std::size_t c = starts_[i]; c < end; ++c) acc += values_[i] * space.cell_measure(c);
    }
    return acc;
  }

  const std::vector<std::size_t>& starts() const noexcept { return starts_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t cells() const noexcept { return cells_; }

 private:
  std::vector<std::size_t> starts_{0};
  std::vector<double> values_{0.0};
  std::size_t cells_ = 1;
};

namespace detail {

inline std::vector<double> panel_points(const StateSpace& space, std::span<const Envelope* const> envelopes) {
  std::vector<double> pts = space.reference_breakpoints();
  for (const Envelope* env : envelopes)
    for (std::size_t start : env->starts())
      if (start > 0) pts.push_back(space.cell_bounds(start).first);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace detail

/// Integrates `fn` against pi. Finite spaces sum exactly; intervals use
/// adaptive Gauss-Kronrod on panels whose boundaries include every envelope
/// breakpoint and every reference-density piece boundary. A panel whose error
/// estimate stays above its share of the tolerance (typically a kink of a
/// min/max integrand) is integrated again cell by cell.
template <typename F>
double integrate(const StateSpace& space, F&& fn, std::span<const Envelope* const> envelopes = {},
                 double abs_tolerance = 1e-8) {
  if (space.is_discrete()) {
    double acc = 0.0;
    for (std::size_t a = 0; a < space.atom_count(); ++a) acc += fn(static_cast<State>(a)) * space.weights()[a];
    return acc;
  }
  using boost::math::quadrature::gauss_kronrod;
  auto gk = [&](double a, double b, double& err) {
    return gauss_kronrod<double, 15>::integrate([&](double x) { return fn(x); }, a, b, 20, 1e-12, &err);
  };
  const std::vector<double> pts = detail::panel_points(space, envelopes);
  const double share = abs_tolerance / static_cast<double>(pts.size() - 1);
  double acc = 0.0;
  double err_total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double a = pts[i];
    const double b = pts[i + 1];
    const double rho = space.reference_density(0.5 * (a + b));
    double err = 0.0;
    double v = gk(a, b, err);
    if (rho * err > share) {
      const std::size_t c0 = space.cell_of(a), c1 = space.cell_of(std::nextafter(b, a));
      if (c1 > c0) {
        v = 0.0;
        err = 0.0;
        for (std::size_t c = c0; c <= c1; ++c) {
          const auto [l, r] = space.cell_bounds(c);
          double e = 0.0;
          v += gk(std::max(l, a), std::min(r, b), e);
          err += e;
        }
      }
    }
    acc += rho * v;
    err_total += rho * err;
  }
  if (err_total > abs_tolerance)
    throw IntegrationError("measure", "quadrature error estimate " + std::to_string(err_total) + " exceeds tolerance");
  return acc;
}

/// A nonnegative function on a state space with a dominating
/// piecewise-constant envelope of finite pi-integral.
///
/// Densities are cheap to copy (shared immutable payload).
class Density {
 public:
  using Fn = std::function<double(State)>;

  Density(SpacePtr space, Fn fn, Envelope envelope, std::optional<double> known_mass = std::nullopt) {
    if (!space) throw DomainError("measure", "density needs a state space");
    if (envelope.cells() != space->cell_count())
      throw DomainError("measure", "envelope cell count does not match the state space");
    const double env_integral = envelope.integral(*space);
    if (!std::isfinite(env_integral)) throw DomainError("measure", "envelope has infinite integral");
    auto data = std::make_shared<Data>();
    data->space = std::move(space);
    data->fn = std::move(fn);
    data->envelope = std::move(envelope);
    if (known_mass) {
      data->mass = *known_mass;
    } else {
      const Envelope* env = &data->envelope;
      data->mass = integrate(*data->space, data->fn, std::span<const Envelope* const>(&env, 1));
    }
    if (!(data->mass >= 0.0) || !std::isfinite(data->mass))
      throw DomainError("measure", "density total mass must be finite and nonnegative");
    data_ = std::move(data);
  }

  /// Per-atom values on a discrete space.
  static Density discrete(SpacePtr space, std::vector<double> values) {
    if (!space || !space->is_discrete()) throw DomainError("measure", "discrete density needs a discrete space");
    if (values.size() != space->atom_count()) throw DomainError("measure", "density length differs from atom count");
    double mass = 0.0;
    for (std::size_t a = 0; a < values.size(); ++a) {
      if (!(values[a] >= 0.0) || !std::isfinite(values[a]))
        throw DomainError("measure", "density values must be finite and nonnegative");
      mass += values[a] * space->weights()[a];
    }
    Envelope env = Envelope::from_cells(values);
    auto table = std::make_shared<const std::vector<double>>(std::move(values));
    return Density(std::move(space), [table](State x) { return (*table)[static_cast<std::size_t>(x)]; },
                   std::move(env), mass);
  }

  /// Density of a probability vector p with respect to the space's atoms: p(a)/pi(a).
  static Density from_probabilities(SpacePtr space, std::span<const double> p) {
    if (!space || !space->is_discrete()) throw DomainError("measure", "probability vector needs a discrete space");
    if (p.size() != space->atom_count()) throw DomainError("measure", "probability vector length differs from atom count");
    std::vector<double> v(p.size());
    for (std::size_t a = 0; a < p.size(); ++a) v[a] = p[a] / space->weights()[a];
    return discrete(std::move(space), std::move(v));
  }

  static Density constant(SpacePtr space, double level) {
    if (!(level >= 0.0) || !std::isfinite(level)) throw DomainError("measure", "constant level must be finite and nonnegative");
    const std::size_t cells = space->cell_count();
    const double mass = level * space->total_measure();
    return Density(std::move(space), [level](State) { return level; }, Envelope::constant(level, cells), mass);
  }

  /// Uniform probability density 1/pi(E).
  static Density uniform(SpacePtr space) {
    const double level = 1.0 / space->total_measure();
    return constant(std::move(space), level);
  }

  /// f(x) = intercept + slope * x on an interval space.
  static Density linear(SpacePtr space, double intercept, double slope, std::size_t envelope_pieces = 16) {
    if (!space || space->is_discrete()) throw DomainError("measure", "linear density needs an interval space");
    auto f = [intercept, slope](State x) { return intercept + slope * x; };
    if (f(space->lo()) < 0.0 || f(space->hi()) < 0.0) throw DomainError("measure", "linear density is negative on the interval");
    const std::size_t cells = space->cell_count();
    envelope_pieces = std::clamp<std::size_t>(envelope_pieces, 1, cells);
    const std::size_t per = cells / envelope_pieces;
    std::vector<std::size_t> starts;
    std::vector<double> values;
    for (std::size_t p = 0; p < envelope_pieces; ++p) {
      const double a = space->cell_bounds(p * per).first;
      const double b = space->cell_bounds(std::min(cells, (p + 1) * per) - 1).second;
      starts.push_back(p * per);
      values.push_back(std::max(f(a), f(b)));
    }
    double mass = 0.0;
    const auto br = space->reference_breakpoints();
    for (std::size_t i = 0; i + 1 < br.size(); ++i) {
      const double u = br[i], v = br[i + 1];
      mass += space->reference_density(0.5 * (u + v)) * (intercept * (v - u) + slope * 0.5 * (v * v - u * u));
    }
    return Density(std::move(space), f, Envelope(std::move(starts), std::move(values), cells), mass);
  }

  /// Equal-width pieces over an interval space (power-of-two piece count).
  static Density piecewise_constant(SpacePtr space, std::vector<double> values) {
    if (!space || space->is_discrete()) throw DomainError("measure", "piecewise-constant density needs an interval space");
    const std::size_t pieces = values.size();
    const std::size_t cells = space->cell_count();
    if (pieces == 0 || pieces > cells || (pieces & (pieces - 1)) != 0)
      throw DomainError("measure", "piecewise-constant density needs a power-of-two piece count <= 1024");
    for (double v : values)
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("measure", "density values must be finite and nonnegative");
    const std::size_t per = cells / pieces;
    std::vector<double> per_cell(cells);
    for (std::size_t c = 0; c < cells; ++c) per_cell[c] = values[c / per];
    Envelope env = Envelope::from_cells(per_cell);
    double mass = 0.0;
    for (std::size_t c = 0; c < cells; ++c) mass += per_cell[c] * space->cell_measure(c);
    const double lo = space->lo();
    const double width = (space->hi() - lo) / static_cast<double>(pieces);
    auto table = std::make_shared<const std::vector<double>>(std::move(values));
    auto fn = [table, lo, width, pieces](State x) {
      auto i = static_cast<std::ptrdiff_t>(std::floor((x - lo) / width));
      return (*table)[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(pieces) - 1))];
    };
    return Density(std::move(space), fn, std::move(env), mass);
  }

  double operator()(State x) const { return data_->fn(x); }

  const StateSpace& space() const noexcept { return *data_->space; }
  const SpacePtr& space_ptr() const noexcept { return data_->space; }
  const Envelope& envelope() const noexcept { return data_->envelope; }
  double mass() const noexcept { return data_->mass; }
  bool is_probability(double tol = 1e-9) const noexcept { return std::abs(data_->mass - 1.0) <= tol; }

  Density scaled(double c) const {
    if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("measure", "scale factor must be positive and finite");
    auto vals = data_->envelope.values();
    for (double& v : vals) v *= c;
    Fn base = data_->fn;
    return Density(data_->space, [base, c](State x) { return c * base(x); },
                   Envelope(data_->envelope.starts(), std::move(vals), data_->envelope.cells()), c * data_->mass);
  }

  Density normalized() const {
    if (!(data_->mass > 0.0)) throw DomainError("measure", "cannot normalize a density of zero mass");
    return scaled(1.0 / data_->mass);
  }

 private:
  struct Data {
    SpacePtr space;
    Fn fn;
    Envelope envelope;
    double mass = 0.0;
  };
  std::shared_ptr<const Data> data_;
};

namespace detail {

inline void require_same_space(const Density& f, const Density& g) {
  if (f.space_ptr() != g.space_ptr() && !(f.space() == g.space()))
    throw DomainError("measure", "densities live on different state spaces");
}

template <typename Op>
Density combine(const Density& f, const Density& g, Op op) {
  require_same_space(f, g);
  const auto ef = f.envelope().per_cell();
  const auto eg = g.envelope().per_cell();
  std::vector<double> env(ef.size());
  for (std::size_t c = 0; c < env.size(); ++c) env[c] = op(ef[c], eg[c]);
  return Density(f.space_ptr(), [f, g, op](State x) { return op(f(x), g(x)); }, Envelope::from_cells(env));
}

}  // namespace detail

/// Pointwise minimum; its subgraph is D_f ∩ D_g.
inline Density pointwise_min(const Density& f, const Density& g) {
  return detail::combine(f, g, [](double a, double b) { return std::min(a, b); });
}

/// Pointwise maximum; its subgraph is D_f ∪ D_g.
inline Density pointwise_max(const Density& f, const Density& g) {
  return detail::combine(f, g, [](double a, double b) { return std::max(a, b); });
}

/// Subgraph D_f = {(x, y) : y <= f(x)} of a density, with mu(D_f) = ∫ f dpi.
class Region {
 public:
  explicit Region(Density density) : density_(std::move(density)) {
    if (!(density_.mass() > 0.0) || !std::isfinite(density_.mass()))
      throw DomainError("measure", "region needs positive finite measure");
  }

  const Density& density() const noexcept { return density_; }
  double measure() const noexcept { return density_.mass(); }
  bool contains(State x, double y) const { return y <= density_(x); }

 private:
  Density density_;
};

/// Measures of the intersection, union and symmetric difference of D_f, D_g.
struct SubgraphMeasures {
  double intersection = 0.0;
  double union_ = 0.0;
  double symmetric_difference = 0.0;
};

inline SubgraphMeasures subgraph_measures(const Density& f, const Density& g) {
  detail::require_same_space(f, g);
  const Envelope* envs[] = {&f.envelope(), &g.envelope()};
  const StateSpace& space = f.space();
  SubgraphMeasures out;
  out.intersection = integrate(space, [&](State x) { return std::min(f(x), g(x)); }, envs);
  out.union_ = integrate(space, [&](State x) { return std::max(f(x), g(x)); }, envs);
  out.symmetric_difference = integrate(space, [&](State x) { return std::abs(f(x) - g(x)); }, envs);
  return out;
}

/// ‖f − g‖ = ∫ [f − g]_+ dpi for probability densities on one space.
inline double tv_distance(const Density& f, const Density& g) {
  detail::require_same_space(f, g);
  if (!f.is_probability() || !g.is_probability())
    throw DomainError("measure", "total variation needs probability densities");
  const Envelope* envs[] = {&f.envelope(), &g.envelope()};
  const double d = integrate(f.space(), [&](State x) { return std::max(f(x) - g(x), 0.0); }, envs);
  return std::clamp(d, 0.0, 1.0);
}

/// Total variation between two probability vectors on a common finite support.
inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("measure", "probability vectors differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::max(p[i] - q[i], 0.0);
  return std::clamp(d, 0.0, 1.0);
}

/// Partial-sum diagnostic for sum_k prod_{n<=k} (1 - eps_n).
struct InfluenceSumDiagnostic {
  double partial_sum = 0.0;
  std::vector<double> products;  // products[k] = prod_{n<=k} (1 - eps_n)
};

/// Reports sum_{k=0}^{horizon} prod_{n=0}^{k} (1 - eps_n). A prefix can never
/// certify divergence, so only the partial sum is returned.
inline InfluenceSumDiagnostic influence_check_H(std::span<const double> eps, std::size_t horizon) {
  if (horizon >= eps.size())
    throw DomainError("measure", "horizon needs eps_0..eps_horizon (horizon < sequence length)");
  for (double e : eps)
    if (!(e >= 0.0 && e <= 1.0)) throw DomainError("measure", "influence coefficients must lie in [0,1]");
  InfluenceSumDiagnostic out;
  double prod = 1.0;
  for (std::size_t k = 0; k <= horizon; ++k) {
    prod *= 1.0 - eps[k];
    out.products.push_back(prod);
    out.partial_sum += prod;
  }
  return out;
}

}  // namespace gcoupling

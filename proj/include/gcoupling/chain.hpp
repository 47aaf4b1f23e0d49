#pragma once

// Stationary-process kernels f(.|past), path simulation through the global
// coupling, and the influence coefficients delta_n / eta_n.
//
// A past is passed oldest-first; the last element is the most recent symbol.
// Every model reads at most depth() trailing symbols. Shorter pasts are
// finite words and each model documents its convention for them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcoupling/coupler.hpp"
#include "gcoupling/errors.hpp"
#include "gcoupling/measure.hpp"
#include "gcoupling/ppp.hpp"
#include "gcoupling/random.hpp"
#include "gcoupling/stats.hpp"

namespace gcoupling {

enum class MemoryKind { iid, finite_order, infinite_geometric };

struct Memory {
  MemoryKind kind = MemoryKind::iid;
  std::size_t order = 0;  // finite_order only
  double c = 0.0;         // infinite_geometric only
  double r = 0.0;
};

class ChainModel {
 public:
  virtual ~ChainModel() = default;

  virtual const SpacePtr& space() const = 0;
  virtual Density kernel(std::span<const State> past) const = 0;
  virtual Memory memory() const = 0;
  /// Number of trailing symbols the kernel reads.
  virtual std::size_t depth() const = 0;
  /// Steps to discard after starting from the empty past.
  virtual std::size_t burn_in() const = 0;
  /// Closed-form delta_n, when the model has one.
  virtual std::optional<double> delta(std::size_t n) const = 0;
  /// Closed-form bound on sum_{k >= n} delta_k.
  virtual std::optional<double> delta_tail(std::size_t n) const = 0;
  /// Closed forms for gamma_n and alpha_n (only memoryless models have them).
  virtual std::optional<double> gamma(std::size_t) const { return std::nullopt; }
  virtual std::optional<double> alpha(std::size_t) const { return std::nullopt; }
  virtual std::string name() const = 0;
  /// True when kernel(z) is the exact law of the next symbol given a finite
  /// word z, not only given a full past.
  virtual bool exact_finite_words() const { return false; }

  /// Kernel on the trailing depth() symbols of `past`.
  Density kernel_on_tail(std::span<const State> past) const {
    const std::size_t d = std::min(depth(), past.size());
    return kernel(past.subspan(past.size() - d));
  }

  /// ‖f(.|a) − f(.|b)‖ on trailing windows; models with a closed form override.
  virtual double kernel_tv(std::span<const State> a, std::span<const State> b) const {
    return tv_distance(kernel_on_tail(a), kernel_on_tail(b));
  }
};

using ModelPtr = std::shared_ptr<const ChainModel>;

/// Memoryless model with a fixed marginal density.
class IidModel final : public ChainModel {
 public:
  explicit IidModel(Density marginal) : marginal_(std::move(marginal)) {
    if (!marginal_.is_probability()) throw DomainError("chain", "iid marginal must be a probability density");
  }

  const SpacePtr& space() const override { return marginal_.space_ptr(); }
  Density kernel(std::span<const State>) const override { return marginal_; }
  Memory memory() const override { return {MemoryKind::iid}; }
  std::size_t depth() const override { return 0; }
  std::size_t burn_in() const override { return 0; }
  std::optional<double> delta(std::size_t) const override { return 0.0; }
  std::optional<double> delta_tail(std::size_t) const override { return 0.0; }
  std::optional<double> gamma(std::size_t) const override { return 0.0; }
  std::optional<double> alpha(std::size_t) const override { return 0.0; }
  std::string name() const override { return "iid"; }
  bool exact_finite_words() const override { return true; }

 private:
  Density marginal_;
};

/// Discrete chain of finite order m <= 4.
///
/// `rows[idx]` is the probability vector of X_0 given the last m symbols,
/// with idx the base-k number formed by those symbols, oldest most
/// significant. Words shorter than m use the exact conditional law under the
/// stationary distribution, so a path started from the empty word is
/// stationary from its first symbol.
class MarkovModel final : public ChainModel {
 public:
  MarkovModel(SpacePtr space, std::size_t order, std::vector<std::vector<double>> rows)
      : space_(std::move(space)), order_(order) {
    if (!space_ || !space_->is_discrete()) throw DomainError("chain", "finite-order model needs a discrete space");
    if (order_ < 1 || order_ > 4) throw DomainError("chain", "finite-order model supports orders 1..4");
    const std::size_t k = space_->atom_count();
    std::size_t contexts = 1;
    for (std::size_t i = 0; i < order_; ++i) contexts *= k;
    if (rows.size() != contexts) throw DomainError("chain", "transition table needs k^m rows");
    for (const auto& row : rows) {
      if (row.size() != k) throw DomainError("chain", "transition row length differs from atom count");
      double s = 0.0;
      for (double v : row) {
        if (!(v >= 0.0)) throw DomainError("chain", "transition probabilities must be nonnegative");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) throw DomainError("chain", "transition rows must sum to 1");
    }
    rows_ = std::move(rows);
    for (const auto& row : rows_) row_densities_.push_back(Density::from_probabilities(space_, row));
    build_short_word_table();
    build_deltas();
  }

  const SpacePtr& space() const override { return space_; }

  Density kernel(std::span<const State> past) const override {
    if (past.size() >= order_) return row_densities_[context_index(past.subspan(past.size() - order_))];
    return short_densities_[past.size()][context_index(past)];
  }

  Memory memory() const override { return {MemoryKind::finite_order, order_}; }
  std::size_t depth() const override { return order_; }
  std::size_t burn_in() const override { return 0; }
  std::optional<double> delta(std::size_t n) const override { return n < order_ ? deltas_[n] : 0.0; }
  std::optional<double> delta_tail(std::size_t n) const override {
    double s = 0.0;
    for (std::size_t i = n; i < order_; ++i) s += deltas_[i];
    return s;
  }
  std::string name() const override { return "markov"; }
  bool exact_finite_words() const override { return true; }

  const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }
  /// Stationary law of m-blocks, indexed like the rows.
  const std::vector<double>& stationary_blocks() const noexcept { return stationary_; }

  std::size_t context_index(std::span<const State> word) const {
    const std::size_t k = space_->atom_count();
    std::size_t idx = 0;
    for (State s : word) idx = idx * k + static_cast<std::size_t>(s);
    return idx;
  }

 private:
  void build_short_word_table() {
    const std::size_t k = space_->atom_count();
    const std::size_t contexts = rows_.size();
    // Power iteration on the lazy block chain (same stationary law, aperiodic).
    std::vector<double> nu(contexts, 1.0 / static_cast<double>(contexts)), next(contexts);
    for (int it = 0; it < 200000; ++it) {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t w = 0; w < contexts; ++w) {
        next[w] += 0.5 * nu[w];
        const std::size_t shifted = (w * k) % contexts;
        for (std::size_t a = 0; a < k; ++a) next[shifted + a] += 0.5 * nu[w] * rows_[w][a];
      }
      double diff = 0.0;
      for (std::size_t w = 0; w < contexts; ++w) diff += std::abs(next[w] - nu[w]);
      nu.swap(next);
      if (diff < 1e-15) break;
    }
    stationary_ = nu;

    short_densities_.resize(order_);
    std::size_t words = 1;
    for (std::size_t n = 0; n < order_; ++n) {
      // P(X_{-n:-1} = z, X_0 = a): sum over blocks whose last n+1 symbols are z a.
      std::size_t suffix_count = words * k;
      std::vector<double> joint(suffix_count, 0.0);
      for (std::size_t w = 0; w < contexts; ++w) joint[w % suffix_count] += nu[w];
      for (std::size_t z = 0; z < words; ++z) {
        std::vector<double> p(k);
        double total = 0.0;
        for (std::size_t a = 0; a < k; ++a) total += joint[z * k + a];
        for (std::size_t a = 0; a < k; ++a)
          p[a] = total > 0.0 ? joint[z * k + a] / total : 1.0 / static_cast<double>(k);
        short_densities_[n].push_back(Density::from_probabilities(space_, p));
      }
      words *= k;
    }
  }

  void build_deltas() {
    const std::size_t k = space_->atom_count();
    deltas_.assign(order_, 0.0);
    for (std::size_t n = 0; n < order_; ++n) {
      // Rows sharing their last n symbols differ only in the older m - n.
      std::size_t suffix = 1;
      for (std::size_t i = 0; i < n; ++i) suffix *= k;
      for (std::size_t u = 0; u < rows_.size(); ++u)
        for (std::size_t v = u + 1; v < rows_.size(); ++v)
          if (u % suffix == v % suffix) deltas_[n] = std::max(deltas_[n], tv_distance(rows_[u], rows_[v]));
    }
  }

  SpacePtr space_;
  std::size_t order_;
  std::vector<std::vector<double>> rows_;
  std::vector<Density> row_densities_;
  std::vector<std::vector<Density>> short_densities_;
  std::vector<double> stationary_;
  std::vector<double> deltas_;
};

namespace detail {

inline std::size_t geometric_depth(double c, double r, double scale) {
  std::size_t d = 1;
  while (d < 4000 && scale * c * std::pow(r, static_cast<double>(d + 1)) / (1.0 - r) >= 1e-9) ++d;
  return d;
}

inline std::vector<double> geometric_coefficients(double c, double r, std::size_t depth) {
  std::vector<double> a(depth + 1, 0.0);
  for (std::size_t k = 1; k <= depth; ++k) a[k] = c * std::pow(r, static_cast<double>(k));
  return a;
}

inline void validate_geometric(double c, double r, double positivity_limit) {
  if (!(r > 0.0 && r < 1.0)) throw DomainError("chain", "geometric rate must lie in (0,1)");
  if (!(c >= 0.0)) throw DomainError("chain", "geometric scale must be nonnegative");
  if (!(c * r / (1.0 - r) < positivity_limit)) throw DomainError("chain", "geometric coefficients too large for a positive kernel");
}

// sum_{k=1}^{min(|past|, depth)} a_k (x_{-k} - 1/2). Missing symbols contribute
// their stationary mean, i.e. nothing.
inline double geometric_drift(std::span<const State> past, const std::vector<double>& a) {
  const std::size_t d = std::min(past.size(), a.size() - 1);
  double s = 0.0;
  for (std::size_t k = 1; k <= d; ++k) s += a[k] * (past[past.size() - k] - 0.5);
  return s;
}

}  // namespace detail

/// Binary chain of infinite order: P(X_0 = 1 | x) = 1/2 + sum_k c r^k (x_{-k} - 1/2),
/// on the uniform probability over {0, 1}. The infinite past is truncated at
/// the depth where the neglected tail falls below 1e-9.
class GeometricBinaryModel final : public ChainModel {
 public:
  GeometricBinaryModel(double c, double r) : c_(c), r_(r) {
    detail::validate_geometric(c, r, 1.0);
    space_ = make_space(StateSpace::uniform_probability(2));
    depth_ = detail::geometric_depth(c, r, 1.0);
    a_ = detail::geometric_coefficients(c, r, depth_);
  }

  const SpacePtr& space() const override { return space_; }
  Density kernel(std::span<const State> past) const override {
    const double p1 = 0.5 + detail::geometric_drift(past, a_);
    return Density::discrete(space_, {2.0 * (1.0 - p1), 2.0 * p1});
  }
  double kernel_tv(std::span<const State> a, std::span<const State> b) const override {
    return std::abs(detail::geometric_drift(a, a_) - detail::geometric_drift(b, a_));
  }
  Memory memory() const override { return {MemoryKind::infinite_geometric, 0, c_, r_}; }
  std::size_t depth() const override { return depth_; }
  std::size_t burn_in() const override { return depth_; }
  std::optional<double> delta(std::size_t n) const override {
    return c_ * std::pow(r_, static_cast<double>(n + 1)) / (1.0 - r_);
  }
  std::optional<double> delta_tail(std::size_t n) const override {
    return c_ * std::pow(r_, static_cast<double>(n + 1)) / ((1.0 - r_) * (1.0 - r_));
  }
  std::string name() const override { return "geometric-binary"; }

  const std::vector<double>& coefficients() const noexcept { return a_; }

 private:
  double c_, r_;
  SpacePtr space_;
  std::size_t depth_;
  std::vector<double> a_;
};

/// Continuous analogue on [0, 1]: f(a | x) = 1 + (2a - 1) sum_k c r^k (x_{-k} - 1/2).
/// Two kernels with drifts s, s' are at total variation |s - s'| / 4.
class GeometricContinuousModel final : public ChainModel {
 public:
  GeometricContinuousModel(double c, double r) : c_(c), r_(r) {
    detail::validate_geometric(c, r, 2.0);
    space_ = make_space(StateSpace::interval(0.0, 1.0));
    depth_ = detail::geometric_depth(c, r, 1.0);
    a_ = detail::geometric_coefficients(c, r, depth_);
  }

  const SpacePtr& space() const override { return space_; }
  Density kernel(std::span<const State> past) const override {
    const double s = detail::geometric_drift(past, a_);
    return Density::linear(space_, 1.0 - s, 2.0 * s);
  }
  double kernel_tv(std::span<const State> a, std::span<const State> b) const override {
    return 0.25 * std::abs(detail::geometric_drift(a, a_) - detail::geometric_drift(b, a_));
  }
  Memory memory() const override { return {MemoryKind::infinite_geometric, 0, c_, r_}; }
  std::size_t depth() const override { return depth_; }
  std::size_t burn_in() const override { return depth_; }
  std::optional<double> delta(std::size_t n) const override {
    return 0.25 * c_ * std::pow(r_, static_cast<double>(n + 1)) / (1.0 - r_);
  }
  std::optional<double> delta_tail(std::size_t n) const override {
    return 0.25 * c_ * std::pow(r_, static_cast<double>(n + 1)) / ((1.0 - r_) * (1.0 - r_));
  }
  std::string name() const override { return "geometric-continuous"; }

 private:
  double c_, r_;
  SpacePtr space_;
  std::size_t depth_;
  std::vector<double> a_;
};

/// The same chain with the reference measure rescaled to a probability:
/// pi' = pi / pi(E), so every kernel is multiplied by pi(E).
class ReweightedModel final : public ChainModel {
 public:
  explicit ReweightedModel(ModelPtr base) : base_(std::move(base)) {
    if (!base_) throw DomainError("chain", "reweighting needs a model");
    const StateSpace& s = *base_->space();
    factor_ = s.total_measure();
    std::vector<double> w = s.weights();
    for (double& v : w) v /= factor_;
    space_ = make_space(s.is_discrete() ? StateSpace::discrete(std::move(w), s.labels())
                                        : StateSpace::interval(s.lo(), s.hi(), std::move(w)));
  }

  const SpacePtr& space() const override { return space_; }
  Density kernel(std::span<const State> past) const override {
    const Density g = base_->kernel(past);
    auto values = g.envelope().values();
    for (double& v : values) v *= factor_;
    const double k = factor_;
    return Density(space_, [g, k](State x) { return k * g(x); },
                   Envelope(g.envelope().starts(), std::move(values), g.envelope().cells()), g.mass());
  }
  Memory memory() const override { return base_->memory(); }
  std::size_t depth() const override { return base_->depth(); }
  std::size_t burn_in() const override { return base_->burn_in(); }
  std::optional<double> delta(std::size_t n) const override { return base_->delta(n); }
  std::optional<double> delta_tail(std::size_t n) const override { return base_->delta_tail(n); }
  std::optional<double> gamma(std::size_t n) const override { return base_->gamma(n); }
  std::optional<double> alpha(std::size_t n) const override { return base_->alpha(n); }
  std::string name() const override { return base_->name(); }
  bool exact_finite_words() const override { return base_->exact_finite_words(); }

  double factor() const noexcept { return factor_; }

 private:
  ModelPtr base_;
  SpacePtr space_;
  double factor_ = 1.0;
};

/// A path X_{origin}, ..., X_{origin + size - 1}.
struct Path {
  std::int64_t origin = 0;
  std::vector<State> values;

  std::int64_t end() const noexcept { return origin + static_cast<std::int64_t>(values.size()); }
  State at(std::int64_t n) const { return values.at(static_cast<std::size_t>(n - origin)); }
  /// X_{origin : n-1}.
  std::span<const State> before(std::int64_t n) const {
    return std::span<const State>(values).first(static_cast<std::size_t>(n - origin));
  }
  bool operator==(const Path&) const = default;
};

/// Independent point-process sources indexed by time, all derived from one key.
class InnovationFamily {
 public:
  template <typename... Tags>
  InnovationFamily(SpacePtr space, std::uint64_t seed, Tags&&... tags)
      : space_(std::move(space)), key_(stream_key(seed, std::forward<Tags>(tags)...)) {}

  PointProcessSource at(std::int64_t n) const {
    return PointProcessSource::from_key(derive_key(key_, static_cast<std::uint64_t>(n)), space_);
  }
  PointProcessSource operator()(std::int64_t n) const { return at(n); }

 private:
  SpacePtr space_;
  std::uint64_t key_;
};

/// X_n = couple(U_n, f(.|X_{s:n-1})).x for n = s..t, with U_n = source_at(n).
template <typename SourceAt>
Path simulate_path(const ChainModel& model, SourceAt&& source_at, std::int64_t s, std::int64_t t, Path prefix = {}) {
  Path path = std::move(prefix);
  if (path.values.empty()) path.origin = s;
  if (path.end() != s) throw DomainError("chain", "prefix must end right before the first simulated index");
  path.values.reserve(static_cast<std::size_t>(std::max<std::int64_t>(0, t - path.origin + 1)));
  for (std::int64_t n = s; n <= t; ++n) {
    try {
      const Density f = model.kernel_on_tail(path.values);
      path.values.push_back(couple(source_at(n), f).x);
    } catch (const Error& e) {
      throw Error("chain", "simulation failed at time " + std::to_string(n) + ": " + e.what());
    }
  }
  return path;
}

inline double delta_exact(const ChainModel& model, std::size_t n) {
  if (auto d = model.delta(n)) return *d;
  throw UnsupportedModel("chain", "model " + model.name() + " has no closed-form delta");
}

/// Stationary-ish path of length `length` ending at index -1, after burn-in.
inline std::vector<State> stationary_sample(const ChainModel& model, const InnovationFamily& family, std::size_t length) {
  const auto total = static_cast<std::int64_t>(model.burn_in() + length);
  Path p = simulate_path(model, family, -total, -1);
  return std::vector<State>(p.values.end() - static_cast<std::ptrdiff_t>(length), p.values.end());
}

/// eta_n for n = 0..max_n by Monte Carlo, sharing replicas across n.
/// Replica r draws an independent past X (depth `past_depth`) and window Y
/// (length max_n); eta_n averages ‖f(.|Y_{-n:-1}) − f(.|X Y_{-n:-1})‖.
inline std::vector<Estimate> eta_profile(const ChainModel& model, std::size_t max_n, std::size_t replicas,
                                         std::uint64_t seed, std::size_t past_depth = 40) {
  if (replicas == 0) throw DomainError("chain", "eta estimation needs at least one replica");
  std::vector<std::vector<double>> samples(max_n + 1, std::vector<double>(replicas));
  std::vector<State> joined;
  for (std::size_t r = 0; r < replicas; ++r) {
    const auto rr = static_cast<std::uint64_t>(r);
    const auto y = stationary_sample(model, InnovationFamily(model.space(), seed, "eta-y", rr), max_n);
    const auto x = stationary_sample(model, InnovationFamily(model.space(), seed, "eta-x", rr), past_depth);
    for (std::size_t n = 0; n <= max_n; ++n) {
      std::span<const State> window(y.end() - static_cast<std::ptrdiff_t>(n), y.end());
      joined.assign(x.begin(), x.end());
      joined.insert(joined.end(), window.begin(), window.end());
      samples[n][r] = model.kernel_tv(window, joined);
    }
  }
  std::vector<Estimate> out;
  for (const auto& s : samples) out.push_back(mean_estimate(s));
  return out;
}

inline Estimate eta_mc(const ChainModel& model, std::size_t n, std::size_t replicas, std::uint64_t seed,
                       std::size_t past_depth = 40) {
  return eta_profile(model, n, replicas, seed, past_depth)[n];
}

struct InfluenceProfile {
  std::vector<std::optional<double>> delta;
  std::vector<Estimate> eta;
  std::vector<std::optional<double>> gamma;
  std::vector<std::optional<double>> alpha;
};

inline InfluenceProfile influence_profile(const ChainModel& model, std::size_t max_n, std::size_t replicas,
                                          std::uint64_t seed) {
  InfluenceProfile p;
  p.eta = eta_profile(model, max_n, replicas, seed);
  for (std::size_t n = 0; n <= max_n; ++n) {
    p.delta.push_back(model.delta(n));
    p.gamma.push_back(model.gamma(n));
    p.alpha.push_back(model.alpha(n));
  }
  return p;
}

/// Number of sampled pasts at which the kernel fails to be strictly
/// positive (atoms, or the cell-boundary grid of an interval).
inline std::size_t priming_condition_violations(const ChainModel& model, std::size_t pasts, std::uint64_t seed) {
  const StateSpace& space = *model.space();
  std::vector<State> grid;
  if (space.is_discrete()) {
    for (std::size_t a = 0; a < space.atom_count(); ++a) grid.push_back(static_cast<State>(a));
  } else {
    for (std::size_t c = 0; c < space.cell_count(); ++c) grid.push_back(space.cell_bounds(c).first);
    grid.push_back(space.hi());
  }
  const std::size_t len = std::max<std::size_t>(model.depth(), 1);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < pasts; ++i) {
    const auto past = stationary_sample(model, InnovationFamily(model.space(), seed, "priming-check", i), len);
    const Density f = model.kernel_on_tail(past);
    for (State a : grid)
      if (!(f(a) > 0.0)) {
        ++bad;
        break;
      }
  }
  return bad;
}

}  // namespace gcoupling

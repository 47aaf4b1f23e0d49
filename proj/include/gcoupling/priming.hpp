#pragma once

// Priming: from innovations U_{1:l} alone, build a word Z_{1:l} with the law
// of X_{1:l} and an event H_l independent of Z on which Z equals the true path
// with probability at least 1 - eps.
//
// Step k (producing Z_{k+1}) uses constants m_k, n_k and the level M solving
// phi(M) = n_k + 1, where phi(s) = ∫ max(f(.|Z_{1:k}) / m_k, s) dpi. With
// A = D_{f(.|Z)/m} and B = D_M, the step event is {t_A(U) <= t_B(U)} and
// Z_{k+1} = x_A(U). The error budget eps / 3 is split three ways per step, so
// step k of l calibrates against tolerance eps / 3^(l - k).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcoupling/chain.hpp"
#include "gcoupling/errors.hpp"
#include "gcoupling/governor.hpp"
#include "gcoupling/measure.hpp"
#include "gcoupling/ppp.hpp"
#include "gcoupling/random.hpp"
#include "gcoupling/stats.hpp"

namespace gcoupling {

/// One doubling-search probe: the candidate constant and its estimated criterion.
struct SearchProbe {
  double constant = 1.0;
  Estimate criterion;
};

/// Raised when m or n would exceed the doubling cap.
class PrimingSearchFailure : public Error {
 public:
  PrimingSearchFailure(const std::string& what, std::vector<SearchProbe> trace)
      : Error("priming", what), trace_(std::move(trace)) {}
  const std::vector<SearchProbe>& trace() const noexcept { return trace_; }

 private:
  std::vector<SearchProbe> trace_;
};

inline constexpr double max_priming_constant = 1048576.0;  // 2^20

struct StepConstants {
  double m = 1.0;
  double n = 1.0;
  double tolerance = 0.0;
  std::vector<SearchProbe> m_trace;
  std::vector<SearchProbe> n_trace;
  std::size_t conditioning_samples = 0;

  /// P[step event] = 1 / (m (n + 1)).
  double event_probability() const noexcept { return 1.0 / (m * (n + 1.0)); }
};

struct PrimingCertificate {
  double epsilon = 0.0;
  std::vector<StepConstants> steps;

  std::size_t length() const noexcept { return steps.size(); }
  double predicted_rate() const noexcept {
    double p = 1.0;
    for (const auto& s : steps) p *= s.event_probability();
    return p;
  }
};

/// A certificate with the same (m, n) at every step and no search traces.
inline PrimingCertificate fixed_certificate(std::size_t length, double m, double n, double epsilon = 0.0) {
  if (!(m >= 1.0) || !(n >= 1.0)) throw DomainError("priming", "constants m and n must be at least 1");
  PrimingCertificate c;
  c.epsilon = epsilon;
  c.steps.assign(length, StepConstants{m, n, epsilon, {}, {}, 0});
  return c;
}

namespace detail {

inline void require_probability_space(const ChainModel& model) {
  if (!model.space()->is_probability())
    throw DomainError("priming", "reference measure must be a probability; wrap the model in ReweightedModel");
}

}  // namespace detail

/// M in [n, n+1] with ∫ max(f / m, M) dpi = n + 1, by bisection to 1e-9.
inline double solve_level(const Density& f, double m, double n) {
  if (!f.space().is_probability()) throw DomainError("priming", "level equation needs a probability reference measure");
  if (!(m >= 1.0) || !(n >= 1.0)) throw DomainError("priming", "constants m and n must be at least 1");
  // max(f/m, s) = s everywhere once s clears the envelope.
  if (f.envelope().sup() / m <= n) return n + 1.0;
  const Envelope* env = &f.envelope();
  auto phi = [&](double s) {
    return integrate(f.space(), [&](State x) { return std::max(f(x) / m, s); }, std::span<const Envelope* const>(&env, 1));
  };
  double lo = n, hi = n + 1.0;
  const double target = n + 1.0;
  if (phi(lo) > target + 1e-9 || phi(hi) < target - 1e-9)
    throw IntegrationError("priming", "level equation does not bracket its root");
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (phi(mid) < target ? lo : hi) = mid;
  }
  return hi;
}

struct PrimedWord {
  std::vector<State> z;
  bool h = true;
  std::vector<char> step_events;
  std::vector<double> levels;
};

/// Builds (Z_{1:l}, H_l) from U_{1:l}; reads nothing but the sources.
inline PrimedWord prime(const ChainModel& model, std::span<const PointProcessSource> u, const PrimingCertificate& cert) {
  detail::require_probability_space(model);
  if (u.size() < cert.length()) throw DomainError("priming", "fewer innovations than certificate steps");
  PrimedWord out;
  const Density level_unit = Density::constant(model.space(), 1.0);
  for (std::size_t k = 0; k < cert.length(); ++k) {
    const StepConstants& c = cert.steps[k];
    const Density fz = model.kernel_on_tail(out.z);
    const Density a = c.m == 1.0 ? fz : fz.scaled(1.0 / c.m);
    const double level = solve_level(fz, c.m, c.n);
    const std::vector<Region> regions{Region(a), Region(level_unit.scaled(level))};
    const auto first = u[k].joint_first_points(regions);
    const bool event = first[0].t <= first[1].t;
    out.z.push_back(first[0].x);
    out.step_events.push_back(event ? 1 : 0);
    out.levels.push_back(level);
    out.h = out.h && event;
  }
  return out;
}

/// Draws of (X path, innovations) used to calibrate and to test priming.
/// Replica r simulates X on [1 - burn_in, length + extra] and extracts U on
/// [1, length + extra]; everything is a function of (seed, tag, r).
struct PrimingReplica {
  Path x;
  GoverningSequence u;
};

inline PrimingReplica priming_replica(const ChainModel& model, std::size_t length, std::uint64_t seed, std::string_view tag,
                                      std::uint64_t r, std::size_t extra = 0) {
  const auto last = static_cast<std::int64_t>(length + extra);
  const std::int64_t start = 1 - static_cast<std::int64_t>(model.burn_in());
  PrimingReplica rep;
  rep.x = simulate_path(model, InnovationFamily(model.space(), seed, tag, "x", r), start, last);
  rep.u = extract_innovations(model, rep.x, stream_key(seed, tag, "u", r), 1);
  return rep;
}

struct CalibrationOptions {
  std::size_t max_replicas = 200000;  // per step
  std::size_t min_accepted = 400;     // conditioning samples wanted per step
  std::uint64_t seed = 0;
};

namespace detail {

// Smallest power of two c with mean(g_c) + 2 se <= tolerance.
template <typename Criterion>
double doubling_search(std::size_t samples, Criterion&& value_at, double tolerance, std::vector<SearchProbe>& trace,
                       const char* what) {
  std::vector<double> vals(samples);
  for (double c = 1.0; c <= max_priming_constant; c *= 2.0) {
    for (std::size_t i = 0; i < samples; ++i) vals[i] = value_at(i, c);
    const Estimate e = mean_estimate(vals);
    trace.push_back({c, e});
    if (e.value + 2.0 * e.std_error <= tolerance) return c;
  }
  throw PrimingSearchFailure(std::string("no ") + what + " up to 2^20 meets the tolerance", trace);
}

}  // namespace detail

/// Finds (m_k, n_k) step by step. Step k conditions on H_k by rejection:
/// replicas are drawn until `min_accepted` of them satisfy H_k (or the budget
/// runs out), and the criteria
///   m: E[∫ [f(.|Z_{1:k}) − m f(.|X past)]_+ dpi | H_k]
///   n: E[∫ [f(.|X past) − n]_+ dpi | H_k]
/// must fall to tolerance eps / 3^(l-k) after adding two standard errors.
inline PrimingCertificate calibrate_priming(const ChainModel& model, std::size_t length, double epsilon,
                                            const CalibrationOptions& opt = {}) {
  detail::require_probability_space(model);
  if (!(epsilon > 0.0)) throw DomainError("priming", "epsilon must be positive");
  PrimingCertificate cert;
  cert.epsilon = epsilon;
  for (std::size_t k = 0; k < length; ++k) {
    const double tolerance = epsilon / std::pow(3.0, static_cast<double>(length - k));
    std::vector<Density> fz, fx;
    for (std::uint64_t r = 0; r < opt.max_replicas && fz.size() < opt.min_accepted; ++r) {
      const PrimingReplica rep = priming_replica(model, k, stream_key(opt.seed, "calibrate", k), "cal", r);
      const PrimedWord w = prime(model, rep.u.window(1, static_cast<std::int64_t>(k)), cert);
      if (!w.h) continue;
      fz.push_back(model.kernel_on_tail(w.z));
      fx.push_back(model.kernel_on_tail(rep.x.values));
    }
    if (fz.empty())
      throw InsufficientReplicas("priming", "no replica satisfied the priming event at step " + std::to_string(k));
    StepConstants c;
    c.tolerance = tolerance;
    c.conditioning_samples = fz.size();
    const StateSpace& space = *model.space();
    auto integral = [&](const Density& f, const Density& g, auto&& op) {
      const Envelope* envs[] = {&f.envelope(), &g.envelope()};
      return integrate(space, [&](State a) { return op(f(a), g(a)); }, envs);
    };
    c.m = detail::doubling_search(
        fz.size(),
        [&](std::size_t i, double m) {
          return integral(fz[i], fx[i], [m](double z, double x) { return std::max(z - m * x, 0.0); });
        },
        tolerance, c.m_trace, "m");
    c.n = detail::doubling_search(
        fx.size(),
        [&](std::size_t i, double n) {
          return integral(fx[i], fx[i], [n](double x, double) { return std::max(x - n, 0.0); });
        },
        tolerance, c.n_trace, "n");
    cert.steps.push_back(std::move(c));
  }
  return cert;
}

/// Smallest power-of-two m for the step-0 criterion on supplied samples;
/// exposed for tests and for callers that bring their own conditioning.
inline double find_m(const ChainModel& model, std::span<const std::vector<State>> z_words,
                     std::span<const std::vector<State>> x_pasts, double tolerance, std::vector<SearchProbe>* trace = nullptr) {
  if (z_words.size() != x_pasts.size() || z_words.empty()) throw DomainError("priming", "need matching nonempty samples");
  std::vector<SearchProbe> local;
  const StateSpace& space = *model.space();
  return detail::doubling_search(
      z_words.size(),
      [&](std::size_t i, double m) {
        const Density f = model.kernel_on_tail(z_words[i]);
        const Density g = model.kernel_on_tail(x_pasts[i]);
        const Envelope* envs[] = {&f.envelope(), &g.envelope()};
        return integrate(space, [&](State a) { return std::max(f(a) - m * g(a), 0.0); }, envs);
      },
      tolerance, trace ? *trace : local, "m");
}

inline double find_n(const ChainModel& model, std::span<const std::vector<State>> x_pasts, double tolerance,
                     std::vector<SearchProbe>* trace = nullptr) {
  if (x_pasts.empty()) throw DomainError("priming", "need nonempty samples");
  std::vector<SearchProbe> local;
  const StateSpace& space = *model.space();
  return detail::doubling_search(
      x_pasts.size(),
      [&](std::size_t i, double n) {
        const Density g = model.kernel_on_tail(x_pasts[i]);
        const Envelope* env = &g.envelope();
        return integrate(space, [&](State a) { return std::max(g(a) - n, 0.0); }, std::span<const Envelope* const>(&env, 1));
      },
      tolerance, trace ? *trace : local, "n");
}

/// P[H] on fresh, independent point processes (H depends on U alone).
inline Estimate measure_priming_rate(const ChainModel& model, const PrimingCertificate& cert, std::size_t replicas,
                                     std::uint64_t seed) {
  detail::require_probability_space(model);
  std::size_t hits = 0;
  std::vector<PointProcessSource> u;
  for (std::size_t r = 0; r < replicas; ++r) {
    u.clear();
    const InnovationFamily fam(model.space(), seed, "alpha", static_cast<std::uint64_t>(r));
    for (std::size_t k = 0; k < cert.length(); ++k) u.push_back(fam.at(static_cast<std::int64_t>(k + 1)));
    hits += prime(model, u, cert).h ? 1 : 0;
  }
  return binomial_estimate(hits, replicas);
}

/// Exact law of X_{1:l} on a discrete space for models whose finite-word
/// kernels are exact, indexed base-k with the oldest symbol most significant.
inline std::optional<std::vector<double>> exact_word_law(const ChainModel& model, std::size_t length) {
  const StateSpace& space = *model.space();
  if (!space.is_discrete() || !model.exact_finite_words()) return std::nullopt;
  const std::size_t k = space.atom_count();
  std::vector<double> law{1.0};
  std::vector<std::vector<State>> words{{}};
  for (std::size_t step = 0; step < length; ++step) {
    std::vector<double> next;
    std::vector<std::vector<State>> next_words;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const Density f = model.kernel_on_tail(words[w]);
      for (std::size_t a = 0; a < k; ++a) {
        next.push_back(law[w] * f(static_cast<State>(a)) * space.weights()[a]);
        auto word = words[w];
        word.push_back(static_cast<State>(a));
        next_words.push_back(std::move(word));
      }
    }
    law.swap(next);
    words.swap(next_words);
  }
  return law;
}

inline std::size_t word_index(std::span<const State> word, std::size_t atoms) {
  std::size_t idx = 0;
  for (State s : word) idx = idx * atoms + static_cast<std::size_t>(s);
  return idx;
}

struct PrimingReport {
  PrimingCertificate certificate;
  std::size_t replicas = 0;
  std::size_t h_count = 0;
  Estimate h_rate;
  double predicted_h_rate = 0.0;
  std::vector<Estimate> step_rates;
  std::vector<double> predicted_step_rates;
  Estimate mismatch_given_h;
  /// Discrete backend with at most 4096 words only.
  bool law_tests = false;
  TestResult z_law;         // Z words against the X law
  bool z_law_exact = false;  // against exact probabilities (else a two-sample test)
  TestResult independence;   // Z word x H contingency table
};

/// Runs prime on innovations extracted from stationary paths and checks the
/// conclusions of the construction at finite scale.
inline PrimingReport priming_experiment(const ChainModel& model, const PrimingCertificate& cert, std::size_t replicas,
                                        std::uint64_t seed) {
  detail::require_probability_space(model);
  if (replicas == 0) throw DomainError("priming", "need at least one replica");
  const std::size_t len = cert.length();
  const StateSpace& space = *model.space();
  std::size_t words = 0;
  if (space.is_discrete()) {
    words = 1;
    for (std::size_t i = 0; i < len && words <= 4096; ++i) words *= space.atom_count();
  }
  PrimingReport rep;
  rep.certificate = cert;
  rep.replicas = replicas;
  rep.law_tests = words > 0 && words <= 4096;
  std::vector<std::size_t> step_hits(len, 0), z_counts, x_counts, table;
  if (rep.law_tests) {
    z_counts.assign(words, 0);
    x_counts.assign(words, 0);
    table.assign(2 * words, 0);
  }
  std::size_t mismatches = 0;
  for (std::uint64_t r = 0; r < replicas; ++r) {
    const PrimingReplica pr = priming_replica(model, len, seed, "prime", r);
    const PrimedWord w = prime(model, pr.u.window(1, static_cast<std::int64_t>(len)), cert);
    for (std::size_t k = 0; k < len; ++k) step_hits[k] += w.step_events[k] ? 1 : 0;
    const auto x = std::span<const State>(pr.x.values).last(len);
    if (w.h) {
      ++rep.h_count;
      mismatches += std::equal(x.begin(), x.end(), w.z.begin()) ? 0 : 1;
    }
    if (rep.law_tests) {
      const std::size_t zi = word_index(w.z, space.atom_count());
      ++z_counts[zi];
      ++table[(w.h ? 0 : words) + zi];
    }
  }
  rep.h_rate = binomial_estimate(rep.h_count, replicas);
  rep.predicted_h_rate = cert.predicted_rate();
  for (std::size_t k = 0; k < len; ++k) {
    rep.step_rates.push_back(binomial_estimate(step_hits[k], replicas));
    rep.predicted_step_rates.push_back(cert.steps[k].event_probability());
  }
  if (rep.h_count == 0) throw InsufficientReplicas("priming", "no replica satisfied the priming event");
  rep.mismatch_given_h = binomial_estimate(mismatches, rep.h_count);
  if (rep.law_tests) {
    if (auto law = exact_word_law(model, len)) {
      rep.z_law = chi2_goodness_of_fit(z_counts, *law);
      rep.z_law_exact = true;
    } else {
      // Independent stationary words for a two-sample comparison.
      for (std::uint64_t r = 0; r < replicas; ++r) {
        const auto xs = stationary_sample(model, InnovationFamily(model.space(), seed, "x-law", r), len);
        ++x_counts[word_index(xs, space.atom_count())];
      }
      rep.z_law = chi2_homogeneity(z_counts, x_counts);
    }
    rep.independence = chi2_independence(table, 2, words);
  }
  return rep;
}

}  // namespace gcoupling

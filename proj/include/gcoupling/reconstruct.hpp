#pragma once

// Reconstruction of the chain from its innovations.
//
// A primed window J = [s, t] gives Z_J and H_J from U_J. From there the
// recursion X'_n = x_{f(.|X'_{s:n-1})}(U_n) runs forward on the same
// innovations as the true path. Given H_J the disagreement grows by at most
// 2 eta_{n-s} per step and stays below 3 eps overall. Chaining windows
// further and further in the past (the schedule) recovers X_0 on the stages
// where the priming event holds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gcoupling/chain.hpp"
#include "gcoupling/errors.hpp"
#include "gcoupling/governor.hpp"
#include "gcoupling/priming.hpp"
#include "gcoupling/stats.hpp"

namespace gcoupling {

struct ReconstructionRun {
  std::int64_t s = 0;  // window start
  std::int64_t t = 0;  // window end
  std::vector<State> z;
  bool h = false;
  Path x_prime;  // X' on [s, last]
};

/// X' on [s, last] with X'_J = Z_J. Sees only the innovations.
inline ReconstructionRun reconstruct_from_window(const ChainModel& model, const GoverningSequence& u, std::int64_t s,
                                                 const PrimingCertificate& cert, std::int64_t last) {
  const auto len = static_cast<std::int64_t>(cert.length());
  const std::int64_t t = s + len - 1;
  if (last < t) throw DomainError("reconstruct", "reconstruction must extend to the end of the window");
  ReconstructionRun run;
  run.s = s;
  run.t = t;
  const PrimedWord w = prime(model, u.window(s, t), cert);
  run.z = w.z;
  run.h = w.h;
  Path prefix{s, w.z};
  run.x_prime = simulate_path(model, u, t + 1, last, std::move(prefix));
  return run;
}

/// First n in [s, last] with X'_n != X_n, if any.
inline std::optional<std::int64_t> first_disagreement(const ReconstructionRun& run, const Path& x) {
  for (std::int64_t n = run.s; n < run.x_prime.end(); ++n)
    if (run.x_prime.at(n) != x.at(n)) return n;
  return std::nullopt;
}

struct DisagreementReport {
  std::size_t window = 0;
  std::size_t horizon = 0;
  double epsilon = 0.0;
  double eta_tail_bound = 0.0;  // analytic bound on sum_{n >= window} eta_n
  std::size_t replicas = 0;
  std::size_t h_count = 0;
  /// rates[j]: P[X' != X on [s, t + j] | H], j = 0..horizon.
  std::vector<Estimate> rates;
  /// increments[j]: P[X' != X at t + j first | H], j = 1..horizon (index 0 unused).
  std::vector<Estimate> increments;
  /// eta_hat[n] for n = 0..window + horizon.
  std::vector<Estimate> eta_hat;
  std::vector<char> increment_ok;
  bool final_ok = false;
  bool law_test_run = false;
  TestResult law_test;  // X' vs X words on the first law_horizon steps after the window
};

struct DisagreementOptions {
  std::size_t replicas = 100000;
  std::size_t eta_replicas = 10000;
  std::size_t law_horizon = 0;  // 0 skips the law test
  std::uint64_t seed = 0;
};

/// Window J = [1, l] primed with `cert`, reconstruction run `horizon` steps
/// past t = l, compared with the true path conditionally on H_J.
inline DisagreementReport disagreement_experiment(const ChainModel& model, const PrimingCertificate& cert,
                                                  std::size_t horizon, const DisagreementOptions& opt) {
  const std::size_t len = cert.length();
  if (len == 0) throw DomainError("reconstruct", "window must be nonempty");
  DisagreementReport rep;
  rep.window = len;
  rep.horizon = horizon;
  rep.epsilon = cert.epsilon;
  rep.replicas = opt.replicas;
  const auto tail = model.delta_tail(len);
  if (!tail) throw UnsupportedModel("reconstruct", "model has no analytic influence tail bound");
  rep.eta_tail_bound = *tail;
  if (rep.eta_tail_bound > cert.epsilon + 1e-12)
    throw DomainError("reconstruct", "window too short: influence tail exceeds epsilon");

  const auto t = static_cast<std::int64_t>(len);
  const auto last = t + static_cast<std::int64_t>(horizon);
  std::vector<std::size_t> mismatch(horizon + 1, 0), fresh(horizon + 1, 0);
  const std::size_t law_h = opt.law_horizon;
  const bool law = law_h > 0 && model.space()->is_discrete() && law_h <= horizon;
  std::size_t words = 1;
  if (law)
    for (std::size_t i = 0; i < law_h; ++i) words *= model.space()->atom_count();
  std::vector<std::size_t> xp_counts(law ? words : 0, 0), x_counts(law ? words : 0, 0);

  for (std::uint64_t r = 0; r < opt.replicas; ++r) {
    const PrimingReplica pr = priming_replica(model, len, opt.seed, "disagree", r, horizon);
    const ReconstructionRun run = reconstruct_from_window(model, pr.u, 1, cert, last);
    if (law) {
      const auto xp = std::span<const State>(run.x_prime.values).subspan(len, law_h);
      ++xp_counts[word_index(xp, model.space()->atom_count())];
    }
    if (!run.h) continue;
    ++rep.h_count;
    const auto first = first_disagreement(run, pr.x);
    if (!first) continue;
    const std::int64_t j0 = std::max<std::int64_t>(*first - t, 0);
    for (std::int64_t j = j0; j <= static_cast<std::int64_t>(horizon); ++j) ++mismatch[static_cast<std::size_t>(j)];
    if (*first > t) ++fresh[static_cast<std::size_t>(*first - t)];
  }
  if (rep.h_count == 0) throw InsufficientReplicas("reconstruct", "no replica satisfied the priming event");
  if (law) {
    for (std::uint64_t r = 0; r < opt.replicas; ++r) {
      const auto xs = stationary_sample(model, InnovationFamily(model.space(), opt.seed, "x-law", r), law_h);
      ++x_counts[word_index(xs, model.space()->atom_count())];
    }
    rep.law_test_run = true;
    rep.law_test = chi2_homogeneity(xp_counts, x_counts);
  }

  rep.eta_hat = eta_profile(model, len + horizon, opt.eta_replicas, stream_key(opt.seed, "eta"));
  rep.increments.resize(horizon + 1);
  rep.increment_ok.assign(horizon + 1, 1);
  for (std::size_t j = 0; j <= horizon; ++j) {
    rep.rates.push_back(binomial_estimate(mismatch[j], rep.h_count));
    if (j == 0) continue;
    rep.increments[j] = binomial_estimate(fresh[j], rep.h_count);
    // Step n = t + j conditions on a past of length n - s = len + j - 1.
    const Estimate& eta = rep.eta_hat[len + j - 1];
    const double sigma = std::hypot(rep.increments[j].std_error, 2.0 * eta.std_error);
    rep.increment_ok[j] = rep.increments[j].value <= 2.0 * eta.value + 3.0 * sigma ? 1 : 0;
  }
  const Estimate& fin = rep.rates.back();
  rep.final_ok = fin.value <= 3.0 * cert.epsilon + 3.0 * fin.std_error;
  return rep;
}

struct SubsequenceSelection {
  std::vector<std::size_t> theta;
  double sum_a = 0.0;
  double sum_b = 0.0;
  double majorant = 0.0;  // sum_k b_{theta(k)} / 2^k
};

/// Greedy increasing selection: index n joins when a_n <= b_n / 2^k, k the
/// number already selected. Then sum a_theta <= sum b_theta / 2^k.
inline SubsequenceSelection select_subsequence(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("reconstruct", "sequences differ in length");
  SubsequenceSelection out;
  double scale = 1.0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    if (!(a[n] >= 0.0) || !(b[n] >= 0.0)) throw DomainError("reconstruct", "sequences must be nonnegative");
    if (a[n] <= b[n] * scale) {
      out.theta.push_back(n);
      out.sum_a += a[n];
      out.sum_b += b[n];
      out.majorant += b[n] * scale;
      scale *= 0.5;
    }
  }
  return out;
}

struct ScheduleLevel {
  std::size_t m = 1;
  double epsilon = 1.0;
  std::size_t window = 1;  // L_m
  PrimingCertificate certificate;
  Estimate alpha;  // measured P[H_{L_m}]
  std::size_t repetitions = 1;  // M_m
};

struct StageInterval {
  std::size_t stage = 1;  // k >= 1
  std::size_t level = 0;  // index into levels
  std::int64_t start = 0;  // t_k
  std::int64_t end = 0;    // t_{k-1} - 1
};

struct ReconstructionSchedule {
  std::vector<ScheduleLevel> levels;
  std::vector<StageInterval> stages;
  /// partial_alpha[k-1] = sum_{j <= k} alpha of stage j.
  std::vector<double> partial_alpha;
  /// Per level: M_m alpha_m >= 1 (counts toward divergence of sum P[H_{J_k}]).
  std::vector<char> level_diverges;
};

struct ScheduleOptions {
  std::size_t first_level = 1;  // m of the first level
  std::size_t stage_budget = 12;  // K
  /// Fixed M_m per level (in order); empty means ceil(1.1 / alpha_hat).
  std::vector<std::size_t> repetitions;
  std::size_t alpha_replicas = 20000;
  CalibrationOptions calibration;
  std::uint64_t seed = 0;
};

/// Smallest L >= 1 with the analytic influence tail at most epsilon.
inline std::size_t window_for(const ChainModel& model, double epsilon) {
  for (std::size_t L = 1; L < 100000; ++L) {
    const auto tail = model.delta_tail(L);
    if (!tail) throw UnsupportedModel("reconstruct", "model has no analytic influence tail bound");
    if (*tail <= epsilon) return L;
  }
  throw DomainError("reconstruct", "no window length reaches the requested tail");
}

inline ReconstructionSchedule build_schedule(const ChainModel& model, const ScheduleOptions& opt) {
  if (opt.stage_budget == 0) throw DomainError("reconstruct", "stage budget must be positive");
  if (opt.first_level == 0) throw DomainError("reconstruct", "levels start at m = 1");
  ReconstructionSchedule s;
  std::int64_t t_prev = 0;
  for (std::size_t m = opt.first_level; s.stages.size() < opt.stage_budget; ++m) {
    ScheduleLevel lv;
    lv.m = m;
    lv.epsilon = 1.0 / static_cast<double>(m);
    lv.window = window_for(model, lv.epsilon);
    CalibrationOptions cal = opt.calibration;
    cal.seed = stream_key(opt.seed, "level", static_cast<std::uint64_t>(m));
    lv.certificate = calibrate_priming(model, lv.window, lv.epsilon, cal);
    lv.alpha = measure_priming_rate(model, lv.certificate, opt.alpha_replicas, stream_key(opt.seed, "alpha", static_cast<std::uint64_t>(m)));
    const std::size_t li = s.levels.size();
    if (li < opt.repetitions.size()) {
      lv.repetitions = opt.repetitions[li];
    } else {
      if (lv.alpha.value <= 0.0) throw InsufficientReplicas("reconstruct", "measured priming rate is zero at level " + std::to_string(m));
      lv.repetitions = static_cast<std::size_t>(std::ceil(1.1 / lv.alpha.value));
    }
    if (lv.repetitions == 0) throw DomainError("reconstruct", "repetition counts must be positive");
    s.level_diverges.push_back(static_cast<double>(lv.repetitions) * lv.alpha.value >= 1.0 ? 1 : 0);
    for (std::size_t i = 0; i < lv.repetitions && s.stages.size() < opt.stage_budget; ++i) {
      StageInterval st;
      st.stage = s.stages.size() + 1;
      st.level = li;
      st.end = t_prev - 1;
      st.start = t_prev - static_cast<std::int64_t>(lv.window);
      t_prev = st.start;
      s.stages.push_back(st);
      const double prev = s.partial_alpha.empty() ? 0.0 : s.partial_alpha.back();
      s.partial_alpha.push_back(prev + lv.alpha.value);
    }
    s.levels.push_back(std::move(lv));
  }
  return s;
}

struct StageStatistics {
  std::size_t stage = 0;
  double epsilon = 0.0;
  Estimate h_rate;
  double alpha = 0.0;
  std::size_t h_count = 0;
  Estimate recovery_given_h;  // P[X^k_0 = X_0 | H_{J_k}]
  double bound = 0.0;          // 1 - 3 eps_k
  bool bound_ok = true;        // vacuous when h_count = 0
};

struct StageOutcome {
  std::size_t stage = 0;
  std::uint64_t replica = 0;
  bool h = false;
  bool recovered = false;
};

struct SuccessiveReport {
  std::vector<StageStatistics> stages;
  std::vector<StageOutcome> outcomes;  // ordered by (stage, replica)
  /// Running fraction of stages 1..k where H held, averaged over replicas.
  std::vector<double> running_h_fraction;
};

/// Stage k reconstructs from J_k up to time 0 and compares with X_0.
inline SuccessiveReport successive_approximation(const ChainModel& model, const ReconstructionSchedule& schedule,
                                                 std::size_t replicas, std::uint64_t seed, bool keep_outcomes = false) {
  if (schedule.stages.empty()) throw DomainError("reconstruct", "empty schedule");
  const std::size_t K = schedule.stages.size();
  const std::int64_t deepest = schedule.stages.back().start;
  std::vector<std::size_t> h(K, 0), rec(K, 0);
  std::vector<double> running(K, 0.0);
  std::vector<std::vector<StageOutcome>> per_stage(keep_outcomes ? K : 0);
  for (std::uint64_t r = 0; r < replicas; ++r) {
    const std::int64_t start = deepest - static_cast<std::int64_t>(model.burn_in());
    const Path x = simulate_path(model, InnovationFamily(model.space(), seed, "succ-x", r), start, 0);
    const GoverningSequence u = extract_innovations(model, x, stream_key(seed, "succ-u", r), deepest);
    std::size_t held = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const StageInterval& st = schedule.stages[k];
      const ReconstructionRun run =
          reconstruct_from_window(model, u, st.start, schedule.levels[st.level].certificate, 0);
      const bool recovered = run.x_prime.at(0) == x.at(0);
      if (run.h) {
        ++h[k];
        ++held;
        rec[k] += recovered ? 1 : 0;
      }
      running[k] += static_cast<double>(held) / static_cast<double>(k + 1);
      if (keep_outcomes) per_stage[k].push_back({k + 1, r, run.h, recovered});
    }
  }
  SuccessiveReport out;
  for (std::size_t k = 0; k < K; ++k) {
    const ScheduleLevel& lv = schedule.levels[schedule.stages[k].level];
    StageStatistics s;
    s.stage = k + 1;
    s.epsilon = lv.epsilon;
    s.alpha = lv.alpha.value;
    s.h_rate = binomial_estimate(h[k], replicas);
    s.h_count = h[k];
    s.bound = 1.0 - 3.0 * lv.epsilon;
    if (h[k] > 0) {
      s.recovery_given_h = binomial_estimate(rec[k], h[k]);
      s.bound_ok = s.recovery_given_h.value >= s.bound - 3.0 * s.recovery_given_h.std_error;
    }
    out.stages.push_back(s);
    out.running_h_fraction.push_back(running[k] / static_cast<double>(replicas));
    if (keep_outcomes) out.outcomes.insert(out.outcomes.end(), per_stage[k].begin(), per_stage[k].end());
  }
  return out;
}

}  // namespace gcoupling

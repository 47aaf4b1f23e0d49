#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gcoupling/reconstruct.hpp"

using namespace gcoupling;

namespace {

SpacePtr two_uniform() { return make_space(StateSpace::uniform_probability(2)); }

MarkovModel order2() {
  return MarkovModel(two_uniform(), 2, {{0.8, 0.2}, {0.4, 0.6}, {0.5, 0.5}, {0.1, 0.9}});
}

}  // namespace

TEST(Reconstruct, IidRecoversPathAfterWindow) {
  const IidModel m(Density::discrete(two_uniform(), {0.6, 1.4}));
  const PrimingCertificate cert = fixed_certificate(2, 1.0, 1.0);
  for (std::uint64_t r = 0; r < 200; ++r) {
    const PrimingReplica pr = priming_replica(m, 2, 11, "iid", r, 8);
    const ReconstructionRun run = reconstruct_from_window(m, pr.u, 1, cert, 10);
    for (std::int64_t n = 3; n <= 10; ++n) EXPECT_EQ(run.x_prime.at(n), pr.x.at(n));
  }
}

TEST(Reconstruct, MarkovExactOnceWindowMatches) {
  const MarkovModel m = order2();
  const PrimingCertificate cert = fixed_certificate(2, 2.0, 2.0);
  std::size_t matched = 0;
  for (std::uint64_t r = 0; r < 400; ++r) {
    const PrimingReplica pr = priming_replica(m, 2, 12, "mk", r, 10);
    const ReconstructionRun run = reconstruct_from_window(m, pr.u, 1, cert, 12);
    if (run.z != std::vector<State>{pr.x.at(1), pr.x.at(2)}) continue;
    ++matched;
    EXPECT_FALSE(first_disagreement(run, pr.x).has_value());
  }
  EXPECT_GT(matched, 100u);
}

TEST(Reconstruct, WindowMustFitBeforeLast) {
  const IidModel m(Density::discrete(two_uniform(), {1.0, 1.0}));
  const PrimingReplica pr = priming_replica(m, 3, 1, "w", 0);
  EXPECT_THROW(reconstruct_from_window(m, pr.u, 1, fixed_certificate(3, 1.0, 1.0), 2), DomainError);
}

TEST(Reconstruct, UsesInnovationsOnly) {
  const GeometricBinaryModel m(0.3, 0.5);
  const PrimingCertificate cert = fixed_certificate(3, 2.0, 2.0);
  for (std::uint64_t r = 0; r < 30; ++r) {
    const PrimingReplica pr = priming_replica(m, 3, 13, "fw", r, 6);
    std::vector<PointProcessSource> rebuilt;
    for (std::int64_t n = pr.u.origin(); n < pr.u.end(); ++n) {
      const auto& src = pr.u.at(n);
      rebuilt.push_back(PointProcessSource::from_edits(src.key(), m.space(), src.slab_width(), src.edits()));
    }
    const GoverningSequence copy(pr.u.origin(), std::move(rebuilt));
    const ReconstructionRun a = reconstruct_from_window(m, pr.u, 1, cert, 9);
    const ReconstructionRun b = reconstruct_from_window(m, copy, 1, cert, 9);
    EXPECT_EQ(a.x_prime, b.x_prime);
    EXPECT_EQ(a.h, b.h);
  }
}

TEST(Subsequence, ZeroAGivesIdentity) {
  const std::vector<double> a(10, 0.0), b(10, 1.0);
  const auto s = select_subsequence(a, b);
  ASSERT_EQ(s.theta.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(s.theta[i], i);
}

TEST(Subsequence, SummableAgainstDivergent) {
  std::vector<double> a, b;
  for (int n = 1; n <= 2000; ++n) {
    a.push_back(1.0 / (static_cast<double>(n) * n));
    b.push_back(1.0 / n);
  }
  const auto s = select_subsequence(a, b);
  EXPECT_GE(s.theta.size(), 5u);
  EXPECT_LE(s.sum_a, s.majorant + 1e-15);
  for (std::size_t k = 1; k < s.theta.size(); ++k) EXPECT_GT(s.theta[k], s.theta[k - 1]);
  for (std::size_t k = 0; k < s.theta.size(); ++k)
    EXPECT_LE(a[s.theta[k]], b[s.theta[k]] / std::ldexp(1.0, static_cast<int>(k)) + 1e-15);
}

TEST(Subsequence, HarmonicAAgainstConstantB) {
  std::vector<double> a, b;
  for (int i = 0; i < 5000; ++i) {
    a.push_back(1.0 / (i + 1));
    b.push_back(1.0);
  }
  const auto s = select_subsequence(a, b);
  ASSERT_GE(s.theta.size(), 8u);
  for (std::size_t k = 0; k < s.theta.size(); ++k)
    EXPECT_GE(s.theta[k] + 1, (std::size_t{1} << k)) << k;
}

TEST(Subsequence, RejectsBadInput) {
  const std::vector<double> a{1.0, 2.0}, b{1.0};
  EXPECT_THROW(select_subsequence(a, b), DomainError);
  const std::vector<double> c{-1.0}, d{1.0};
  EXPECT_THROW(select_subsequence(c, d), DomainError);
}

TEST(Disagreement, IidStaysAtZero) {
  const IidModel m(Density::discrete(two_uniform(), {0.6, 1.4}));
  DisagreementOptions opt;
  opt.replicas = 3000;
  opt.eta_replicas = 500;
  opt.law_horizon = 3;
  opt.seed = 21;
  const auto rep = disagreement_experiment(m, fixed_certificate(1, 1.0, 1.0, 0.1), 5, opt);
  for (std::size_t j = 1; j <= 5; ++j) EXPECT_EQ(rep.rates[j].value, 0.0);
  EXPECT_TRUE(rep.final_ok);
  EXPECT_GT(rep.law_test.p_value, 1e-4);
}

TEST(Disagreement, OrderTwoVanishesPastWindow) {
  const MarkovModel m = order2();
  DisagreementOptions opt;
  opt.replicas = 3000;
  opt.eta_replicas = 500;
  opt.seed = 22;
  const auto rep = disagreement_experiment(m, fixed_certificate(2, 2.0, 2.0, 0.1), 6, opt);
  for (std::size_t j = 1; j <= 6; ++j) EXPECT_EQ(rep.increments[j].value, 0.0);
  for (char ok : rep.increment_ok) EXPECT_TRUE(ok);
}

TEST(Disagreement, GeometricWithinBudget) {
  const GeometricBinaryModel m(0.3, 0.5);
  CalibrationOptions cal;
  cal.seed = 9;
  const std::size_t L = window_for(m, 0.15);
  const PrimingCertificate cert = calibrate_priming(m, L, 0.15, cal);
  DisagreementOptions opt;
  opt.replicas = 20000;
  opt.eta_replicas = 4000;
  opt.law_horizon = 4;
  opt.seed = 23;
  const auto rep = disagreement_experiment(m, cert, 10, opt);
  EXPECT_TRUE(rep.final_ok);
  for (std::size_t j = 1; j <= 10; ++j) EXPECT_TRUE(rep.increment_ok[j]) << j;
  EXPECT_GT(rep.law_test.p_value, 1e-4);
}

TEST(Disagreement, RejectsShortWindow) {
  const GeometricBinaryModel m(0.3, 0.5);
  DisagreementOptions opt;
  opt.replicas = 10;
  EXPECT_THROW(disagreement_experiment(m, fixed_certificate(1, 1.0, 1.0, 0.01), 3, opt), DomainError);
}

TEST(Schedule, StagesAreDisjointAndContiguous) {
  const GeometricBinaryModel m(0.3, 0.5);
  ScheduleOptions opt;
  opt.first_level = 4;
  opt.stage_budget = 6;
  opt.alpha_replicas = 2000;
  opt.calibration.min_accepted = 100;
  opt.seed = 3;
  const ReconstructionSchedule s = build_schedule(m, opt);
  ASSERT_EQ(s.stages.size(), 6u);
  EXPECT_EQ(s.stages.front().end, -1);
  for (std::size_t k = 0; k < s.stages.size(); ++k) {
    const auto& st = s.stages[k];
    EXPECT_EQ(st.stage, k + 1);
    EXPECT_EQ(static_cast<std::size_t>(st.end - st.start + 1), s.levels[st.level].window);
    if (k > 0) {
      EXPECT_EQ(st.end, s.stages[k - 1].start - 1);
    }
  }
  for (const auto& lv : s.levels) {
    EXPECT_LE(*m.delta_tail(lv.window), lv.epsilon);
    EXPECT_GE(static_cast<double>(lv.repetitions) * lv.alpha.value, 1.0);
  }
  for (std::size_t k = 1; k < s.partial_alpha.size(); ++k) EXPECT_GT(s.partial_alpha[k], s.partial_alpha[k - 1]);
}

TEST(Schedule, IidRecoversOnEveryPrimedStage) {
  const IidModel m(Density::discrete(two_uniform(), {0.6, 1.4}));
  ScheduleOptions opt;
  opt.stage_budget = 4;
  opt.alpha_replicas = 1000;
  opt.calibration.min_accepted = 50;
  const ReconstructionSchedule s = build_schedule(m, opt);
  const SuccessiveReport rep = successive_approximation(m, s, 300, 5, true);
  ASSERT_EQ(rep.stages.size(), 4u);
  EXPECT_EQ(rep.outcomes.size(), 4u * 300u);
  for (const auto& o : rep.outcomes)
    if (o.h) {
      EXPECT_TRUE(o.recovered);
    }
}

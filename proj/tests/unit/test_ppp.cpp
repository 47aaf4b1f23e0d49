#include <gtest/gtest.h>

#include <thread>
#include <vector>

#include "gcoupling/ppp.hpp"
#include "gcoupling/stats.hpp"

using namespace gcoupling;

namespace {

SpacePtr two_atoms() { return make_space(StateSpace::counting(2)); }
SpacePtr unit_interval() { return make_space(StateSpace::interval(0.0, 1.0)); }

}  // namespace

TEST(FirstPoint, TimeIsExponentialWithRateOne) {
  const auto sp = unit_interval();
  const Region a(Density::linear(sp, 0.0, 2.0));
  std::vector<double> ts;
  for (std::uint64_t s = 0; s < 100000; ++s) {
    const FirstPoint p = PointProcessSource(s, sp).first_point_in(a);
    ASSERT_LE(p.y, a.density()(p.x));
    ts.push_back(p.t);
  }
  const Estimate e = mean_estimate(ts);
  EXPECT_NEAR(e.value, 1.0, 3.0 * e.std_error);
}

TEST(FirstPoint, TimeRateEqualsRegionMeasure) {
  const auto sp = two_atoms();
  const Region a(Density::discrete(sp, {1.5, 1.0}));
  std::vector<double> ts;
  for (std::uint64_t s = 0; s < 50000; ++s) ts.push_back(PointProcessSource(s, sp).first_point_in(a).t);
  EXPECT_GT(ks_test(ts, [](double t) { return 1.0 - std::exp(-2.5 * t); }).p_value, 1e-4);
}

TEST(FirstPoint, UniformTwoAtomLaw) {
  const auto sp = two_atoms();
  const Region a(Density::discrete(sp, {0.5, 0.5}));
  std::vector<std::size_t> counts(2, 0);
  for (std::uint64_t s = 0; s < 100000; ++s) ++counts[static_cast<std::size_t>(PointProcessSource(s, sp).first_point_in(a).x)];
  const std::vector<double> expected{0.5, 0.5};
  EXPECT_GT(chi2_goodness_of_fit(counts, expected).p_value, 1e-4);
}

TEST(FirstPoint, ScalingKeepsLaw) {
  const auto sp = two_atoms();
  const Density f = Density::discrete(sp, {0.3, 0.7});
  const Region a(f), b(f.scaled(3.0));
  std::vector<std::size_t> counts(2, 0);
  for (std::uint64_t s = 0; s < 50000; ++s) ++counts[static_cast<std::size_t>(PointProcessSource(s, sp).first_point_in(b).x)];
  const std::vector<double> expected{0.3, 0.7};
  EXPECT_GT(chi2_goodness_of_fit(counts, expected).p_value, 1e-4);
}

TEST(JointFirstPoints, SameRegionTwice) {
  const auto sp = unit_interval();
  const std::vector<Region> r{Region(Density::uniform(sp)), Region(Density::uniform(sp))};
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto pts = PointProcessSource(s, sp).joint_first_points(r);
    EXPECT_EQ(pts[0], pts[1]);
  }
}

TEST(JointFirstPoints, SubsetOrdering) {
  const auto sp = unit_interval();
  const Density small = Density::linear(sp, 0.0, 1.0);  // x <= 1
  const Density big = Density::constant(sp, 1.0);
  const std::vector<Region> r{Region(small), Region(big)};
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const auto pts = PointProcessSource(s, sp).joint_first_points(r);
    EXPECT_LE(pts[1].t, pts[0].t);
    if (pts[1].y <= small(pts[1].x)) {
      EXPECT_EQ(pts[0], pts[1]);
    }
  }
}

TEST(JointFirstPoints, CoincidenceRatioDiscrete) {
  const auto sp = two_atoms();
  const std::vector<Region> r{Region(Density::discrete(sp, {0.5, 0.5})), Region(Density::discrete(sp, {0.7, 0.3}))};
  std::size_t hits = 0;
  const std::size_t n = 100000;
  for (std::uint64_t s = 0; s < n; ++s) {
    const auto pts = PointProcessSource(s, sp).joint_first_points(r);
    if (pts[0].t == pts[1].t) {
      ++hits;
      EXPECT_EQ(pts[0].x, pts[1].x);
    }
  }
  const Estimate e = binomial_estimate(hits, n);
  EXPECT_NEAR(e.value, 2.0 / 3.0, 3.0 * e.std_error);
}

TEST(JointFirstPoints, IntervalXCoincidenceEqualsTCoincidence) {
  const auto sp = unit_interval();
  const std::vector<Region> r{Region(Density::uniform(sp)), Region(Density::linear(sp, 0.0, 2.0))};
  for (std::uint64_t s = 0; s < 5000; ++s) {
    const auto pts = PointProcessSource(s, sp).joint_first_points(r);
    EXPECT_EQ(pts[0].t == pts[1].t, pts[0].x == pts[1].x);
  }
}

TEST(Queries, ConsistentAcrossQueryOrder) {
  const auto sp = unit_interval();
  const Region a(Density::linear(sp, 0.0, 2.0)), b(Density::uniform(sp));
  for (std::uint64_t s = 0; s < 500; ++s) {
    const PointProcessSource src(s, sp);
    const FirstPoint a1 = src.first_point_in(a);
    const FirstPoint b1 = src.first_point_in(b);
    const PointProcessSource fresh(s, sp);
    const FirstPoint b2 = fresh.first_point_in(b);
    const FirstPoint a2 = fresh.first_point_in(a);
    EXPECT_EQ(a1, a2);
    EXPECT_EQ(b1, b2);
    EXPECT_EQ(src.block(0, 3), fresh.block(0, 3));
  }
}

TEST(Queries, ConcurrentQueriesAgree) {
  const auto sp = unit_interval();
  const Region a(Density::linear(sp, 0.0, 2.0));
  std::vector<FirstPoint> serial;
  for (std::uint64_t s = 0; s < 400; ++s) serial.push_back(PointProcessSource(s, sp).first_point_in(a));
  std::vector<std::vector<FirstPoint>> results(4, std::vector<FirstPoint>(400));
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (std::uint64_t s = 0; s < 400; ++s) results[t][s] = PointProcessSource(s, sp).first_point_in(a);
    });
  for (auto& th : threads) th.join();
  for (const auto& r : results) EXPECT_EQ(r, serial);
}

TEST(Splice, ReplacesFirstPoint) {
  const auto sp = unit_interval();
  const Region a(Density::linear(sp, 0.0, 2.0));
  for (std::uint64_t s = 0; s < 500; ++s) {
    const PointProcessSource src(s, sp);
    const FirstPoint before = src.first_point_in(a);
    const PointProcessSource view = src.splice(a, 0.75, 0.4);
    const FirstPoint after = view.first_point_in(a);
    EXPECT_EQ(after.x, 0.75);
    EXPECT_DOUBLE_EQ(after.y, 0.4 * 1.5);
    EXPECT_EQ(after.t, before.t);
    EXPECT_EQ(view.edit_count(), 1u);
  }
}

TEST(Splice, PointsOutsideRegionUnchanged) {
  const auto sp = unit_interval();
  const Density f = Density::linear(sp, 0.0, 2.0);
  const Region a(f);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const PointProcessSource src(s, sp);
    const PointProcessSource view = src.splice(a, 0.2, 0.9);
    auto outside = [&](const PointProcessSource& p) {
      std::vector<ProcessPoint> out;
      for (const auto& q : p.points_in_window(3.0, 6.0))
        if (q.y > f(q.x)) out.push_back(q);
      return out;
    };
    EXPECT_EQ(outside(src), outside(view));
  }
}

TEST(Splice, RoundTripThroughEdits) {
  const auto sp = two_atoms();
  const Region a(Density::discrete(sp, {0.5, 1.5}));
  const PointProcessSource view = PointProcessSource(9, sp).splice(a, 0.0, 0.5);
  const PointProcessSource rebuilt = PointProcessSource::from_edits(view.key(), sp, view.slab_width(), view.edits());
  EXPECT_EQ(rebuilt.first_point_in(a), view.first_point_in(a));
  EXPECT_EQ(rebuilt.points_in_window(2.0, 5.0), view.points_in_window(2.0, 5.0));
}

TEST(Splice, Errors) {
  const auto sp = two_atoms();
  const Region a(Density::discrete(sp, {1.0, 0.0}));
  const PointProcessSource src(1, sp);
  EXPECT_THROW(src.splice(a, 1.0, 0.5), DomainError);
  EXPECT_THROW(src.splice(a, 0.0, 1.5), DomainError);
  EXPECT_THROW(src.splice(a, 3.0, 0.5), DomainError);
}

TEST(CountingLaw, BoxCountsArePoisson) {
  const auto sp = unit_interval();
  std::vector<double> left, right;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    std::size_t l = 0, r = 0;
    for (const auto& p : PointProcessSource(s, sp).points_in_window(2.0, 1.0)) (p.x < 0.5 ? l : r) += 1;
    left.push_back(static_cast<double>(l));
    right.push_back(static_cast<double>(r));
  }
  EXPECT_NEAR(mean_estimate(left).value, 1.0, 4.0 * mean_estimate(left).std_error);
  EXPECT_GT(poisson_dispersion(left).p_value, 1e-4);
  EXPECT_GT(poisson_dispersion(right).p_value, 1e-4);
  EXPECT_LT(std::abs(correlation(left, right)), 4.0 / std::sqrt(10000.0));
}

TEST(Source, Errors) {
  EXPECT_THROW(PointProcessSource(1, nullptr), DomainError);
  EXPECT_THROW(PointProcessSource(1, two_atoms(), 0.0), DomainError);
  const PointProcessSource src(1, two_atoms());
  EXPECT_THROW(src.first_point_in(Region(Density::uniform(unit_interval()))), DomainError);
}

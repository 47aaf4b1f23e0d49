#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gcoupling/measure.hpp"

using namespace gcoupling;

namespace {

SpacePtr two_atoms() { return make_space(StateSpace::counting(2)); }
SpacePtr unit_interval() { return make_space(StateSpace::interval(0.0, 1.0)); }

}  // namespace

TEST(StateSpace, DiscreteBasics) {
  const StateSpace s = StateSpace::discrete({0.25, 0.75}, {"a", "b"});
  EXPECT_TRUE(s.is_discrete());
  EXPECT_EQ(s.atom_count(), 2u);
  EXPECT_TRUE(s.is_probability());
  EXPECT_TRUE(s.contains(1.0));
  EXPECT_FALSE(s.contains(2.0));
  EXPECT_FALSE(s.contains(0.5));
  EXPECT_THROW(StateSpace::discrete({1.0, 0.0}), DomainError);
  EXPECT_THROW(StateSpace::discrete({}), DomainError);
}

TEST(StateSpace, IntervalCellsAndReference) {
  const StateSpace s = StateSpace::interval(0.0, 2.0, {1.0, 3.0});
  EXPECT_EQ(s.cell_count(), StateSpace::interval_cells);
  EXPECT_NEAR(s.total_measure(), 4.0, 1e-12);
  EXPECT_EQ(s.cell_of(0.0), 0u);
  EXPECT_EQ(s.cell_of(2.0), StateSpace::interval_cells - 1);
  EXPECT_DOUBLE_EQ(s.reference_density(0.5), 1.0);
  EXPECT_DOUBLE_EQ(s.reference_density(1.5), 3.0);
  EXPECT_THROW(StateSpace::interval(1.0, 0.0), DomainError);
  EXPECT_THROW(StateSpace::interval(0.0, 1.0, {1.0, 1.0, 1.0}), DomainError);
}

TEST(Density, EnvelopeMustMatchSpace) {
  EXPECT_THROW(Density(two_atoms(), [](State) { return 1.0; }, Envelope::constant(1.0, 3)), DomainError);
  EXPECT_THROW(Density(unit_interval(), [](State) { return 1.0; },
                       Envelope::constant(std::numeric_limits<double>::infinity(), StateSpace::interval_cells)),
               DomainError);
}

TEST(Density, LinearMassIsExact) {
  const Density g = Density::linear(unit_interval(), 0.0, 2.0);
  EXPECT_DOUBLE_EQ(g.mass(), 1.0);
  EXPECT_TRUE(g.is_probability());
  EXPECT_THROW(Density::linear(unit_interval(), -1.0, 0.5), DomainError);
  // Envelope dominates the function on every cell.
  const StateSpace& s = g.space();
  for (std::size_t c = 0; c < s.cell_count(); ++c) {
    const auto [a, b] = s.cell_bounds(c);
    EXPECT_GE(g.envelope().at_cell(c), g(b));
    EXPECT_GE(g.envelope().at_cell(c), g(a));
  }
}

TEST(Density, QuadratureMatchesClosedForm) {
  const Density f(unit_interval(), [](State x) { return 3.0 * x * x; }, Envelope::constant(3.0, StateSpace::interval_cells));
  EXPECT_NEAR(f.mass(), 1.0, 1e-12);
}

TEST(Density, ScaledAndNormalized) {
  const Density f = Density::discrete(two_atoms(), {1.0, 3.0});
  EXPECT_DOUBLE_EQ(f.mass(), 4.0);
  const Density n = f.normalized();
  EXPECT_DOUBLE_EQ(n.mass(), 1.0);
  EXPECT_DOUBLE_EQ(n(1.0), 0.75);
  EXPECT_DOUBLE_EQ(n.envelope().sup(), 0.75);
}

TEST(TvDistance, DiscreteExamples) {
  const auto sp = two_atoms();
  const Density f = Density::discrete(sp, {0.5, 0.5});
  const Density g = Density::discrete(sp, {0.7, 0.3});
  EXPECT_DOUBLE_EQ(tv_distance(f, f), 0.0);
  EXPECT_NEAR(tv_distance(f, g), 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(tv_distance(Density::discrete(sp, {1.0, 0.0}), Density::discrete(sp, {0.0, 1.0})), 1.0);
}

TEST(TvDistance, RejectsMismatchedSpacesAndNonProbabilities) {
  const Density f = Density::discrete(two_atoms(), {0.5, 0.5});
  const Density g = Density::uniform(unit_interval());
  EXPECT_THROW(tv_distance(f, g), DomainError);
  EXPECT_THROW(tv_distance(f, Density::discrete(two_atoms(), {1.0, 1.0})), DomainError);
}

TEST(TvDistance, IntervalExample) {
  const auto sp = unit_interval();
  EXPECT_NEAR(tv_distance(Density::uniform(sp), Density::linear(sp, 0.0, 2.0)), 0.25, 1e-10);
}

TEST(SubgraphMeasures, DiscreteExample) {
  const auto sp = two_atoms();
  const auto m = subgraph_measures(Density::discrete(sp, {0.5, 0.5}), Density::discrete(sp, {0.7, 0.3}));
  EXPECT_NEAR(m.intersection, 0.8, 1e-15);
  EXPECT_NEAR(m.union_, 1.2, 1e-15);
  EXPECT_NEAR(m.symmetric_difference, 0.4, 1e-15);
}

TEST(SubgraphMeasures, IdenticalDensities) {
  const auto sp = two_atoms();
  const Density f = Density::discrete(sp, {0.25, 0.75});
  const auto m = subgraph_measures(f, f);
  EXPECT_DOUBLE_EQ(m.intersection, 1.0);
  EXPECT_DOUBLE_EQ(m.union_, 1.0);
  EXPECT_DOUBLE_EQ(m.symmetric_difference, 0.0);
}

TEST(SubgraphMeasures, IntervalExample) {
  const auto sp = unit_interval();
  const auto m = subgraph_measures(Density::uniform(sp), Density::linear(sp, 0.0, 2.0));
  EXPECT_NEAR(m.intersection, 0.75, 1e-10);
  EXPECT_NEAR(m.union_, 1.25, 1e-10);
  EXPECT_NEAR(m.symmetric_difference, 0.5, 1e-10);
}

TEST(PointwiseOps, MinMaxMasses) {
  const auto sp = unit_interval();
  const Density f = Density::uniform(sp), g = Density::linear(sp, 0.0, 2.0);
  EXPECT_NEAR(pointwise_min(f, g).mass(), 0.75, 1e-10);
  EXPECT_NEAR(pointwise_max(f, g).mass(), 1.25, 1e-10);
}

TEST(Region, RejectsZeroMeasure) {
  EXPECT_THROW(Region(Density::discrete(two_atoms(), {0.0, 0.0})), DomainError);
}

TEST(InfluenceCheckH, Examples) {
  const std::vector<double> zeros(11, 0.0), ones(11, 1.0), halves(4, 0.5);
  EXPECT_DOUBLE_EQ(influence_check_H(zeros, 10).partial_sum, 11.0);
  EXPECT_DOUBLE_EQ(influence_check_H(ones, 10).partial_sum, 0.0);
  EXPECT_DOUBLE_EQ(influence_check_H(halves, 3).partial_sum, 0.9375);
}

TEST(InfluenceCheckH, Errors) {
  const std::vector<double> bad{0.5, 1.5};
  EXPECT_THROW(influence_check_H(bad, 1), DomainError);
  const std::vector<double> shortseq{0.5};
  EXPECT_THROW(influence_check_H(shortseq, 1), DomainError);
}

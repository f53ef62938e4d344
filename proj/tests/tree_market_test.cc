#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hara/error.h"
#include "hara/tree_market.h"
#include "support/random_market.h"

namespace hara {
namespace {

MarketTree OnePeriod() {
  const double u[] = {1.2}, d[] = {0.9}, p[] = {0.5};
  return MarketTree::Binomial(1, 1.0, u, d, p);
}

TEST(BinomialTree, ShapeAndPrices) {
  const double u[] = {1.2, 1.1}, d[] = {0.9, 0.8}, p[] = {0.5, 0.3};
  const MarketTree t = MarketTree::Binomial(2, 2.0, u, d, p);
  EXPECT_EQ(t.size(), 7u);
  EXPECT_EQ(t.horizon(), 2);
  EXPECT_EQ(t.leaf_count(), 4u);
  EXPECT_EQ(t.children(0).first, 1u);
  EXPECT_DOUBLE_EQ(t.node(1).s(0), 2.4);
  EXPECT_DOUBLE_EQ(t.node(2).s(0), 1.8);
  // up-up, up-down, down-up, down-down
  EXPECT_DOUBLE_EQ(t.node(3).s(0), 2.4 * 1.1);
  EXPECT_DOUBLE_EQ(t.node(6).s(0), 1.8 * 0.8);
  EXPECT_DOUBLE_EQ(t.node(4).branch_probability, 0.7);
  EXPECT_NEAR(t.node(1).delta_s(0), 0.4, 1e-15);
}

TEST(BinomialTree, RejectsBadMultipliersWithPeriod) {
  const double u[] = {1.2, 1.1}, d[] = {0.9, 1.0}, p[] = {0.5, 0.5};
  try {
    MarketTree::Binomial(2, 1.0, u, d, p);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("period 2"), std::string::npos) << e.what();
  }
}

TEST(Builder, RenumbersBreadthFirst) {
  MarketTree::Builder b(1, Vector::Ones(1));
  // Declared depth-first with arbitrary keys.
  b.add_child(0, 10, 0.5, Vector::Constant(1, 0.1));
  b.add_child(10, 11, 0.5, Vector::Constant(1, 0.1));
  b.add_child(10, 12, 0.5, Vector::Constant(1, -0.1));
  b.add_child(0, 20, 0.5, Vector::Constant(1, -0.1));
  b.add_child(20, 21, 1.0, Vector::Constant(1, 0.0));
  const MarketTree t = b.Build();
  EXPECT_EQ(t.level(1).first, 1u);
  EXPECT_EQ(t.level(2).first, 3u);
  EXPECT_EQ(t.children(1).size(), 2u);
  EXPECT_EQ(t.children(2).size(), 1u);
  EXPECT_NEAR(t.node(3).s(0), 1.2, 1e-15);
}

TEST(Builder, RejectsMalformedTrees) {
  {
    MarketTree::Builder b(1, Vector::Ones(1));
    b.add_child(0, 1, 0.5, Vector::Constant(1, 0.1)).add_child(0, 1, 0.5, Vector::Constant(1, -0.1));
    EXPECT_THROW(b.Build(), ValidationError);
  }
  {
    MarketTree::Builder b(1, Vector::Ones(1));
    b.add_child(0, 1, 0.5, Vector::Constant(1, 0.1)).add_child(0, 2, 0.4, Vector::Constant(1, -0.1));
    EXPECT_THROW(b.Build(), ValidationError);  // probabilities sum to 0.9
  }
  {
    MarketTree::Builder b(1, Vector::Ones(1));
    b.add_child(0, 1, 0.5, Vector::Constant(1, 0.1)).add_child(0, 2, 0.5, Vector::Constant(1, -0.1));
    b.add_child(1, 3, 1.0, Vector::Constant(1, 0.1));
    EXPECT_THROW(b.Build(), ValidationError);  // leaf 2 above the horizon
  }
  {
    MarketTree::Builder b(1, Vector::Ones(1));
    b.add_child(7, 1, 1.0, Vector::Constant(1, 0.1));
    EXPECT_THROW(b.Build(), ValidationError);  // unknown parent
  }
  {
    MarketTree::Builder b(1, Vector::Ones(1));
    b.add_child(0, 1, 1.0, Vector::Constant(1, 0.1)).declare_price(1, Vector::Constant(1, 1.2));
    EXPECT_THROW(b.Build(), ValidationError);  // 1 + 0.1 != 1.2
  }
}

TEST(Builder, KeepsDeclaredPrices) {
  MarketTree::Builder b(1, Vector::Ones(1));
  b.add_child(0, 1, 1.0, Vector::Constant(1, 0.1)).declare_price(1, Vector::Constant(1, 1.1 + 1e-14));
  EXPECT_EQ(b.Build().node(1).s(0), 1.1 + 1e-14);
}

// Brute force: E[X_T | node] by summing path probabilities below the node.
double brute_conditional(const MarketTree& t, const AdaptedProcess& x, NodeId node) {
  double num = 0.0;
  for (NodeId leaf : t.leaves()) {
    const auto path = t.path_to(leaf);
    if (path[static_cast<std::size_t>(t.node(node).depth)] != node) continue;
    num += t.path_probability(leaf) * x[leaf];
  }
  return num / t.path_probability(node);
}

TEST(ConditionalExpectation, MatchesPathEnumeration) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const MarketTree t = testing::random_tree(rng, 3, 1);
    AdaptedProcess x(t.size());
    for (NodeId id = 0; id < t.size(); ++id) x[id] = testing::uniform(rng, -2, 2);
    for (int depth = 0; depth < 3; ++depth) {
      const auto ce = conditional_expectation(t, x, depth, 3);
      for (NodeId id : t.level(depth)) {
        EXPECT_NEAR(ce[id - t.level(depth).first], brute_conditional(t, x, id), 1e-13);
      }
    }
  }
}

TEST(Tree, LeafProbabilitiesSumToOne) {
  std::mt19937_64 rng(2);
  const MarketTree t = testing::random_tree(rng, 4, 2);
  double total = 0.0;
  for (NodeId leaf : t.leaves()) total += t.path_probability(leaf);
  EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(Tree, ReweightedNormalizesPerSiblingGroup) {
  const MarketTree t = OnePeriod();
  std::vector<double> r = {1.0, 3.0, 1.0};
  const MarketTree q = t.reweighted(r);
  EXPECT_DOUBLE_EQ(q.node(1).branch_probability, 0.75);
  EXPECT_DOUBLE_EQ(q.node(2).branch_probability, 0.25);
  EXPECT_TRUE(q.same_as(q));
  EXPECT_FALSE(q.same_as(t));
}

TEST(Tree, TruncatedAndStopped) {
  std::mt19937_64 rng(3);
  const MarketTree t = testing::random_tree(rng, 3, 1);
  const MarketTree head = t.truncated(1);
  EXPECT_EQ(head.horizon(), 1);
  EXPECT_EQ(head.size(), 1 + t.level(1).size());
  const NodeId stop[] = {t.level(1).first};
  const MarketTree s = t.stopped(stop);
  for (NodeId id = 0; id < t.size(); ++id) {
    const auto path = t.path_to(id);
    const bool below = path.size() > 2 && path[1] == stop[0];
    if (below) {
      EXPECT_EQ(s.node(id).delta_s.norm(), 0.0);
      EXPECT_EQ(s.node(id).s(0), t.node(stop[0]).s(0));
    } else {
      EXPECT_EQ(s.node(id).s(0), t.node(id).s(0));
    }
  }
}

TEST(AdmissibleSet, IntervalAndRayExit) {
  const MarketTree t = OnePeriod();
  const AdmissibleSet set = admissible_set(t, kRoot);
  const auto iv = *set.interval();
  EXPECT_NEAR(iv.lower, -5.0, 1e-12);   // 1 + 0.2 theta > 0
  EXPECT_NEAR(iv.upper, 10.0, 1e-12);   // 1 - 0.1 theta > 0
  EXPECT_NEAR(set.ray_exit(Vector::Constant(1, 1.0)), 10.0, 1e-12);
  EXPECT_TRUE(set.contains(Vector::Constant(1, 9.9)));
  EXPECT_FALSE(set.contains(Vector::Constant(1, 10.001)));  // 0.9 - 1 is not exactly -0.1
  EXPECT_THROW(admissible_set(t, 1), ValidationError);
}

TEST(PredictableProcess, LeavesAreUndefined) {
  const MarketTree t = OnePeriod();
  PredictableProcess theta(t, Vector::Constant(1, 2.0));
  EXPECT_TRUE(theta.defined_at(0));
  EXPECT_FALSE(theta.defined_at(1));
  EXPECT_THROW(theta.at(1), std::exception);
}

}  // namespace
}  // namespace hara

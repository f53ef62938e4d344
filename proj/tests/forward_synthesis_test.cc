#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hara/error.h"
#include "hara/forward_synthesis.h"
#include "hara/hellinger.h"
#include "support/random_market.h"

namespace hara {
namespace {

MarketTree Binomial(int T) {
  std::vector<double> u(T, 1.2), d(T, 0.9), p(T, 0.5);
  return MarketTree::Binomial(T, 1.0, u, d, p);
}

TEST(SynthesizePower, WorkedOnePeriod) {
  const MarketTree t = Binomial(1);
  const auto r = synthesize_power(t, HaraSpec::Power(0.5, {1.0, 1.0}));
  EXPECT_NEAR(r.theta_hat.at(0)(0), 5.0, 1e-12);
  EXPECT_NEAR(r.d[0], 0.5 * std::sqrt(2.0) + 0.5 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(r.d[0], 3.0 / (2.0 * std::sqrt(2.0)), 1e-14);
  // Z_D is trivial, so a_D carries the whole drift.
  EXPECT_NEAR(r.z_d[1], 1.0, 1e-15);
  EXPECT_NEAR(r.a_d[1], -std::log(3.0 / (2.0 * std::sqrt(2.0))), 1e-14);
  EXPECT_NEAR(r.a_d[1], -0.058891517828191, 1e-13);
}

TEST(SynthesizePower, IidPeriodsMultiply) {
  const auto one = synthesize_power(Binomial(1), HaraSpec::Power(-1.5, {-1.0, -1.0}));
  const auto two = synthesize_power(Binomial(2), HaraSpec::Power(-1.5, std::vector<double>(4, -1.0)));
  EXPECT_NEAR(two.d[0], -one.d[0] * one.d[0], 1e-13);
  for (NodeId id : Binomial(2).internal_nodes()) EXPECT_NEAR(two.theta_hat.at(id)(0) * Binomial(2).node(id).s(0),
                                                             one.theta_hat.at(0)(0), 1e-10);
}

TEST(SynthesizePower, MartingaleTreeIsTrivial) {
  const MarketTree t = testing::martingale_trinomial(3);
  for (double p : {-2.0, 0.4}) {
    const auto r = synthesize_power(t, HaraSpec::Power(p, std::vector<double>(t.leaf_count(), p > 0 ? 1.0 : -1.0)));
    for (NodeId id : t.internal_nodes()) EXPECT_NEAR(r.theta_hat.at(id)(0), 0.0, 1e-14);
    for (NodeId id = 0; id < t.size(); ++id) EXPECT_NEAR(r.d[id], p > 0 ? 1.0 : -1.0, 1e-14);
  }
}

// Recomputes every backward step from scratch.
TEST(SynthesizePower, RecursionAndDecompositionInvariants) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const int dim = trial % 5 == 4 ? 2 : 1;
    const MarketTree t = testing::random_tree(rng, testing::uniform_int(rng, 1, 3), dim);
    const double p = testing::random_p(rng);
    const double sign = p > 0 ? 1.0 : -1.0;
    const auto r = synthesize_power(t, HaraSpec::Power(p, testing::random_terminal(rng, t.leaf_count(), sign)));
    for (NodeId id = 0; id < t.size(); ++id) EXPECT_GT(sign * r.d[id], 0.0);
    for (NodeId id : t.internal_nodes()) {
      const Vector& th = r.theta_hat.at(id);
      const double want = expect_children(t, id, [&](NodeId c) {
        return r.d[c] * std::pow(1.0 + th.dot(t.node(c).delta_s), p);
      });
      EXPECT_NEAR(r.d[id], want, 1e-11 * std::max(1.0, std::abs(want)));
      EXPECT_NEAR(expect_children(t, id, [&](NodeId c) { return r.z_d[c]; }), r.z_d[id], 1e-12 * r.z_d[id]);
    }
    for (NodeId id = 0; id < t.size(); ++id) {
      const double rebuilt = r.d[0] * r.z_d[id] * std::exp(r.a_d[id]);
      EXPECT_NEAR(rebuilt, r.d[id], 1e-11 * std::max(1.0, std::abs(r.d[id])));
    }
    // a_D is shared by siblings.
    for (NodeId id : t.internal_nodes()) {
      for (NodeId c : t.children(id)) EXPECT_EQ(r.a_d[c], r.a_d[t.children(id).first]);
    }
  }
}

TEST(SynthesizePower, ClosedFormADAgreesWithDecomposition) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const MarketTree t = testing::random_binomial(rng, 3);
    const double p = testing::random_p(rng);
    const HaraSpec spec = HaraSpec::Power(p, testing::random_terminal(rng, t.leaf_count(), p > 0 ? 1.0 : -1.0));
    const auto r = synthesize_power(t, spec);
    const AdaptedProcess a = binomial_a_d(t, spec, r);
    for (NodeId id = 0; id < t.size(); ++id) EXPECT_NEAR(a[id], r.a_d[id], 1e-10);
  }
}

TEST(SynthesizePower, ClosedFormADWithZeroRate) {
  // prob_up chosen so that the market is a martingale: theta = 0, gamma = 1.
  const double u[] = {1.2}, d[] = {0.9}, pu[] = {1.0 / 3.0};
  const MarketTree t = MarketTree::Binomial(1, 1.0, u, d, pu);
  const HaraSpec spec = HaraSpec::Power(0.5, {1.0, 1.0});
  const auto r = synthesize_power(t, spec);
  EXPECT_NEAR(r.theta_hat.at(0)(0), 0.0, 1e-13);
  const AdaptedProcess a = binomial_a_d(t, spec, r);
  EXPECT_NEAR(a[1], 0.0, 1e-14);
}

TEST(SynthesizePower, ClosedFormADRejectsNonBinomial) {
  const MarketTree t = testing::martingale_trinomial(1);
  const HaraSpec spec = HaraSpec::Power(0.5, {1.0, 1.0, 1.0});
  EXPECT_THROW(binomial_a_d(t, spec, synthesize_power(t, spec)), ValidationError);
}

TEST(SynthesizePower, SpecValidation) {
  EXPECT_THROW(HaraSpec::Power(0.5, {1.0, -1.0}), ValidationError);
  EXPECT_THROW(HaraSpec::Power(-0.5, {1.0, 1.0}), ValidationError);
  EXPECT_THROW(HaraSpec::Power(0.0, {1.0}), ValidationError);
  EXPECT_THROW(HaraSpec::Log({1.0, 0.0}, {0.0, 0.0}), ValidationError);
  EXPECT_THROW(synthesize_power(Binomial(1), HaraSpec::Power(0.5, {1.0, 1.0, 1.0})), ValidationError);
}

TEST(SynthesizePower, ArbitrageNodeRaisesSolverErrorWithNode) {
  MarketTree::Builder b(1, Vector::Ones(1));
  b.add_child(0, 1, 0.5, Vector::Constant(1, 0.1)).add_child(0, 2, 0.5, Vector::Constant(1, -0.1));
  b.add_child(1, 3, 0.5, Vector::Constant(1, 0.2)).add_child(1, 4, 0.5, Vector::Constant(1, 0.1));
  b.add_child(2, 5, 0.5, Vector::Constant(1, 0.1)).add_child(2, 6, 0.5, Vector::Constant(1, -0.1));
  const MarketTree t = b.Build();
  try {
    synthesize_power(t, HaraSpec::Power(-1.0, std::vector<double>(4, -1.0)));
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.node(), 1u);
  }
}

TEST(SynthesizeLog, WorkedOnePeriod) {
  const auto r = synthesize_log(Binomial(1), HaraSpec::Log({1.0, 1.0}, {0.0, 0.0}));
  EXPECT_NEAR(r.theta_hat.at(0)(0), 2.5, 1e-12);
  EXPECT_NEAR(r.d_bar[0], 0.5 * std::log(1.5) + 0.5 * std::log(0.75), 1e-14);
  EXPECT_NEAR(r.d_bar[0], 0.058891517828191, 1e-13);
  EXPECT_DOUBLE_EQ(r.d_hat[0], 1.0);
}

TEST(SynthesizeLog, MartingaleTreeKeepsDBarConstant) {
  const MarketTree t = testing::martingale_trinomial(2);
  const auto r = synthesize_log(t, HaraSpec::Log(std::vector<double>(9, 1.0), std::vector<double>(9, 0.7)));
  for (NodeId id : t.internal_nodes()) EXPECT_NEAR(r.theta_hat.at(id)(0), 0.0, 1e-14);
  for (NodeId id = 0; id < t.size(); ++id) EXPECT_NEAR(r.d_bar[id], 0.7, 1e-14);
}

TEST(SynthesizeLog, RandomTreesSatisfyRecursion) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const MarketTree t = testing::random_tree(rng, 3, trial % 4 == 3 ? 2 : 1);
    const auto dh = testing::random_terminal(rng, t.leaf_count(), 1.0);
    std::vector<double> db(t.leaf_count());
    for (auto& x : db) x = testing::uniform(rng, -1, 1);
    const auto r = synthesize_log(t, HaraSpec::Log(dh, db));
    for (NodeId id : t.internal_nodes()) {
      const Vector& th = r.theta_hat.at(id);
      EXPECT_NEAR(r.d_hat[id], expect_children(t, id, [&](NodeId c) { return r.d_hat[c]; }), 1e-14);
      const double drift =
          expect_children(t, id, [&](NodeId c) { return r.d_hat[c] * std::log1p(th.dot(t.node(c).delta_s)); });
      EXPECT_NEAR(r.d_bar[id], expect_children(t, id, [&](NodeId c) { return r.d_bar[c]; }) + drift, 1e-13);
      // The martingale part of D_bar is a martingale; the predictable part is shared by siblings.
      EXPECT_NEAR(expect_children(t, id, [&](NodeId c) { return r.d_bar_martingale[c]; }), r.d_bar_martingale[id],
                  1e-13);
      for (NodeId c : t.children(id)) {
        EXPECT_NEAR(r.d_bar_predictable[c], r.d_bar_predictable[id] - drift, 1e-14);
      }
    }
  }
}

TEST(SynthesizeLog, NonConstantDHatMatchesClosedForm) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const MarketTree t = testing::random_binomial(rng, 2);
    const auto dh = testing::random_terminal(rng, t.leaf_count(), 1.0, 0.5);
    const auto r = synthesize_log(t, HaraSpec::Log(dh, std::vector<double>(dh.size(), 0.0)));
    for (NodeId id : t.internal_nodes()) {
      const NodeId up = t.children(id).first, dn = up + 1;
      const double s = t.node(id).s(0);
      const double qu = t.node(up).branch_probability * r.d_hat[up] / r.d_hat[id];
      const double cf = binomial_log_closed_form(t.node(up).s(0) / s, t.node(dn).s(0) / s, s, qu);
      EXPECT_NEAR(r.theta_hat.at(id)(0), cf, 1e-9 * std::max(1.0, std::abs(cf)));
    }
  }
}

TEST(Synthesize, ThetaDoesNotDependOnCapital) {
  // The solver never sees wealth; the result is a pure function of the tree and spec.
  std::mt19937_64 rng(14);
  const MarketTree t = testing::random_tree(rng, 3, 1);
  const HaraSpec spec = HaraSpec::Power(0.3, testing::random_terminal(rng, t.leaf_count(), 1.0));
  const auto a = synthesize(t, spec);
  const auto b = synthesize(t, spec);
  for (NodeId id : t.internal_nodes()) EXPECT_EQ(a.theta_hat.at(id), b.theta_hat.at(id));
}

}  // namespace
}  // namespace hara

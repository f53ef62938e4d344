#pragma once

// Random no-arbitrage trees and terminal data for property tests.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "hara/tree_market.h"

namespace hara::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Branch probabilities bounded away from 0.
inline std::vector<double> random_probabilities(std::mt19937_64& rng, int k) {
  std::vector<double> p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (auto& x : p) total += (x = uniform(rng, 0.2, 1.0));
  for (auto& x : p) x /= total;
  return p;
}

// One-asset increments for k branches: at least one up and one down move.
inline std::vector<Vector> random_increments_1d(std::mt19937_64& rng, int k, double s) {
  std::vector<Vector> out;
  for (int b = 0; b < k; ++b) {
    double r;
    if (b == 0) {
      r = uniform(rng, 0.05, 0.4);
    } else if (b == 1) {
      r = -uniform(rng, 0.05, 0.4);
    } else {
      r = uniform(rng, -0.35, 0.35);
    }
    out.push_back(Vector::Constant(1, s * r));
  }
  return out;
}

// Two-asset increments: three directions roughly 120 degrees apart, so 0 is
// inside their convex hull.
inline std::vector<Vector> random_increments_2d(std::mt19937_64& rng, const Vector& s) {
  std::vector<Vector> out;
  const double base = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  for (int b = 0; b < 3; ++b) {
    const double angle = base + b * 2.0 * std::numbers::pi / 3.0 + uniform(rng, -0.3, 0.3);
    const double radius = uniform(rng, 0.05, 0.3);
    Vector x(2);
    x << s(0) * radius * std::cos(angle), s(1) * radius * std::sin(angle);
    out.push_back(x);
  }
  return out;
}

// Full tree of the given horizon; every internal node gets between
// min_branching and max_branching children (d = 1) or exactly 3 (d = 2).
inline MarketTree random_tree(std::mt19937_64& rng, int horizon, int dimension, int min_branching = 2,
                              int max_branching = 3) {
  Vector s0 = Vector::Ones(dimension);
  MarketTree::Builder builder(dimension, s0);
  struct Open {
    long key;
    int depth;
    Vector s;
  };
  std::vector<Open> frontier{{MarketTree::Builder::kRootKey, 0, s0}};
  long next_key = 1;
  while (!frontier.empty()) {
    std::vector<Open> next;
    for (const Open& o : frontier) {
      if (o.depth == horizon) continue;
      const int k = dimension == 1 ? uniform_int(rng, min_branching, max_branching) : 3;
      const std::vector<Vector> dx =
          dimension == 1 ? random_increments_1d(rng, k, o.s(0)) : random_increments_2d(rng, o.s);
      const std::vector<double> p = random_probabilities(rng, k);
      for (int b = 0; b < k; ++b) {
        builder.add_child(o.key, next_key, p[static_cast<std::size_t>(b)], dx[static_cast<std::size_t>(b)]);
        next.push_back({next_key, o.depth + 1, o.s + dx[static_cast<std::size_t>(b)]});
        ++next_key;
      }
    }
    frontier = std::move(next);
  }
  return builder.Build();
}

struct BinomialParams {
  std::vector<double> xi_u, xi_d, prob_up;
};

inline BinomialParams random_binomial_params(std::mt19937_64& rng, int horizon) {
  BinomialParams out;
  for (int j = 0; j < horizon; ++j) {
    out.xi_u.push_back(uniform(rng, 1.02, 1.5));
    out.xi_d.push_back(uniform(rng, 0.6, 0.98));
    out.prob_up.push_back(uniform(rng, 0.2, 0.8));
  }
  return out;
}

inline MarketTree random_binomial(std::mt19937_64& rng, int horizon) {
  const BinomialParams bp = random_binomial_params(rng, horizon);
  return MarketTree::Binomial(horizon, 1.0, bp.xi_u, bp.xi_d, bp.prob_up);
}

// Symmetric trinomial martingale tree: increments (+a, 0, -a) with
// probabilities (w, 1 - 2w, w).
inline MarketTree martingale_trinomial(int horizon, double a = 0.1, double w = 0.3) {
  MarketTree::Builder builder(1, Vector::Ones(1));
  std::vector<long> frontier{MarketTree::Builder::kRootKey};
  long next_key = 1;
  for (int j = 0; j < horizon; ++j) {
    std::vector<long> next;
    for (long parent : frontier) {
      const double probs[3] = {w, 1.0 - 2.0 * w, w};
      const double dx[3] = {a, 0.0, -a};
      for (int b = 0; b < 3; ++b) {
        builder.add_child(parent, next_key, probs[b], Vector::Constant(1, dx[b]));
        next.push_back(next_key++);
      }
    }
    frontier = std::move(next);
  }
  return builder.Build();
}

// Terminal coefficient with sign `sign` and multiplicative jitter in
// [1 - spread, 1 + spread].
inline std::vector<double> random_terminal(std::mt19937_64& rng, std::size_t leaves, double sign,
                                           double spread = 0.3) {
  std::vector<double> out(leaves);
  for (auto& x : out) x = sign * uniform(rng, 1.0 - spread, 1.0 + spread);
  return out;
}

// p in [-3, 0.8] away from 0.
inline double random_p(std::mt19937_64& rng) {
  double p = 0.0;
  while (std::abs(p) < 0.05) p = uniform(rng, -3.0, 0.8);
  return p;
}

}  // namespace hara::testing

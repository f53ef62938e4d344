#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hara {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Global breadth-first index of a node. Together with the node's depth this is
// the stable node identity used in files and fixtures.
using NodeId = std::size_t;

inline constexpr NodeId kRoot = 0;

struct Node {
  int depth = 0;
  // Position among the nodes of the same depth, in breadth-first order.
  std::size_t index_in_depth = 0;
  std::optional<NodeId> parent;
  NodeId first_child = 0;
  std::size_t child_count = 0;
  // One-step conditional probability of reaching this node from its parent.
  // 1 for the root.
  double branch_probability = 1.0;
  // S at this node minus S at the parent; zero vector at the root.
  Vector delta_s;
  Vector s;
};

// Finite filtered event tree with d-dimensional prices.
//
// Nodes are stored in breadth-first order, so children of a node occupy a
// contiguous id range and every depth level is a contiguous id range. The tree
// is immutable once built; processes live in separate per-node containers.
class MarketTree {
 public:
  class Builder;

  // Full binary tree of depth `horizon`. Period j (1-based) uses xi_u[j-1],
  // xi_d[j-1] and prob_up[j-1]; up children come first.
  static MarketTree Binomial(int horizon, double s0, std::span<const double> xi_u,
                             std::span<const double> xi_d, std::span<const double> prob_up);

  int horizon() const { return horizon_; }
  int dimension() const { return dimension_; }
  std::size_t size() const { return nodes_.size(); }

  const Node& node(NodeId id) const { return nodes_.at(id); }
  bool is_leaf(NodeId id) const { return nodes_.at(id).child_count == 0; }

  // Contiguous id range of the children of `id`.
  struct IdRange {
    struct iterator {
      NodeId id;
      NodeId operator*() const { return id; }
      iterator& operator++() {
        ++id;
        return *this;
      }
      bool operator==(const iterator&) const = default;
    };
    NodeId first;
    NodeId last;  // one past the end
    iterator begin() const { return {first}; }
    iterator end() const { return {last}; }
    std::size_t size() const { return last - first; }
  };
  IdRange children(NodeId id) const;
  IdRange level(int depth) const;
  IdRange leaves() const { return level(horizon_); }
  std::size_t leaf_count() const { return leaves().size(); }

  // Internal nodes, in breadth-first order.
  std::vector<NodeId> internal_nodes() const;

  // Ancestors of `id` from the root down to `id` inclusive.
  std::vector<NodeId> path_to(NodeId id) const;

  // Increments of the children of an internal node, one column per branch
  // (d x k), and the matching branch probabilities.
  Matrix branch_increments(NodeId id) const;
  Vector branch_probabilities(NodeId id) const;

  // Unconditional probability of reaching `id`.
  double path_probability(NodeId id) const;

  // Same shape and prices with one-step probabilities replaced:
  // new_prob(child) = prob(child) * ratio(child) / sum over siblings.
  // `ratios` is indexed by node id; the root entry is ignored.
  MarketTree reweighted(std::span<const double> ratios) const;

  // Keeps levels 0..depth.
  MarketTree truncated(int depth) const;

  // Stopped price process S^tau: every increment below a stopping node is set
  // to zero. `stopping_nodes` holds the nodes at which tau fires; at most one
  // per root-to-leaf path.
  MarketTree stopped(std::span<const NodeId> stopping_nodes) const;

  // True when every node has the same shape, S and probabilities (within `tol`).
  bool same_as(const MarketTree& other, double tol = 0.0) const;

 private:
  MarketTree() = default;
  void validate() const;

  int horizon_ = 0;
  int dimension_ = 1;
  std::vector<Node> nodes_;
  std::vector<NodeId> level_start_;  // size horizon + 2
};

// Incremental construction of an explicit tree. Node keys are caller-chosen
// integers; Build() renumbers nodes into breadth-first order.
class MarketTree::Builder {
 public:
  Builder(int dimension, Vector s0);

  // Declares a child of `parent_key`. Children keep their insertion order.
  Builder& add_child(long parent_key, long key, double probability, Vector delta_s);

  // Optional declared price at a node, checked against the running sum of
  // increments within 1e-12 by Build(), which then keeps the declared value.
  Builder& declare_price(long key, Vector s);

  MarketTree Build() const;

  static constexpr long kRootKey = 0;

 private:
  struct Pending {
    long key;
    long parent_key;
    double probability;
    Vector delta_s;
  };
  int dimension_;
  Vector s0_;
  std::vector<Pending> pending_;
  std::vector<std::pair<long, Vector>> declared_prices_;
};

// Real-valued process with one value per node.
class AdaptedProcess {
 public:
  AdaptedProcess() = default;
  explicit AdaptedProcess(std::size_t node_count, double init = 0.0) : values_(node_count, init) {}
  explicit AdaptedProcess(std::vector<double> values) : values_(std::move(values)) {}

  double& operator[](NodeId id) { return values_[id]; }
  double operator[](NodeId id) const { return values_[id]; }
  double at(NodeId id) const { return values_.at(id); }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

 private:
  std::vector<double> values_;
};

// Vector-valued process carried on the step from an internal node to each of
// its children. Entries at leaves are empty and must not be read.
class PredictableProcess {
 public:
  PredictableProcess() = default;
  PredictableProcess(const MarketTree& tree);
  PredictableProcess(const MarketTree& tree, const Vector& constant);

  const Vector& at(NodeId id) const;
  void set(NodeId id, Vector v);
  bool defined_at(NodeId id) const { return id < values_.size() && values_[id].size() > 0; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<Vector> values_;
};

// Exact conditional expectation E[X_{from_depth} | F_{at_depth}], one value per
// node of depth `at_depth` in breadth-first order. `from_depth` defaults to
// at_depth + 1.
std::vector<double> conditional_expectation(const MarketTree& tree, const AdaptedProcess& x,
                                            int at_depth, std::optional<int> from_depth = {});

// Sum over children of prob(child) * f(child).
template <typename F>
double expect_children(const MarketTree& tree, NodeId id, F&& f) {
  double acc = 0.0;
  for (NodeId c : tree.children(id)) acc += tree.node(c).branch_probability * f(c);
  return acc;
}

// { theta : 1 + theta' x > 0 for every branch increment x } at one node.
class AdmissibleSet {
 public:
  AdmissibleSet(Matrix increments);

  bool contains(const Vector& theta) const { return margin(theta) > 0.0; }
  // min over branches of 1 + theta' x.
  double margin(const Vector& theta) const;
  const Matrix& increments() const { return increments_; }

  // d = 1 only: open interval endpoints, +-infinity on unbounded sides.
  struct Interval {
    double lower;
    double upper;
  };
  std::optional<Interval> interval() const { return interval_; }

  // Largest s >= 0 with 1 + s * direction' x > 0 on all branches; +inf when the
  // ray never leaves the set.
  double ray_exit(const Vector& direction) const;

 private:
  Matrix increments_;
  std::optional<Interval> interval_;
};

AdmissibleSet admissible_set(const MarketTree& tree, NodeId id);

}  // namespace hara

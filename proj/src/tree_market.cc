#include "hara/tree_market.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <sstream>

#include "hara/error.h"

namespace hara {
namespace {

constexpr double kProbabilitySumTol = 1e-14;
constexpr double kPriceTol = 1e-12;

std::string period_label(int j) { return "period " + std::to_string(j); }

}  // namespace

MarketTree MarketTree::Binomial(int horizon, double s0, std::span<const double> xi_u,
                                std::span<const double> xi_d, std::span<const double> prob_up) {
  if (horizon < 1) throw ValidationError("binomial tree needs horizon >= 1");
  if (!(s0 > 0.0) || !std::isfinite(s0)) throw ValidationError("binomial tree needs s0 > 0");
  const auto T = static_cast<std::size_t>(horizon);
  if (xi_u.size() != T || xi_d.size() != T || prob_up.size() != T) {
    throw ValidationError("binomial tree needs one xi_u, xi_d and prob_up per period");
  }
  for (std::size_t j = 0; j < T; ++j) {
    const int period = static_cast<int>(j) + 1;
    if (!(xi_d[j] > 0.0 && xi_d[j] < 1.0)) {
      throw ValidationError(period_label(period) + ": xi_d must lie in (0, 1)");
    }
    if (!(xi_u[j] > 1.0) || !std::isfinite(xi_u[j])) {
      throw ValidationError(period_label(period) + ": xi_u must exceed 1");
    }
    if (!(prob_up[j] > 0.0 && prob_up[j] < 1.0)) {
      throw ValidationError(period_label(period) + ": prob_up must lie in (0, 1)");
    }
  }

  MarketTree tree;
  tree.horizon_ = horizon;
  tree.dimension_ = 1;
  tree.level_start_.assign(T + 2, 0);
  std::size_t total = 0;
  for (std::size_t j = 0; j <= T; ++j) {
    tree.level_start_[j] = total;
    total += std::size_t{1} << j;
  }
  tree.level_start_[T + 1] = total;
  tree.nodes_.resize(total);

  Node& root = tree.nodes_[0];
  root.depth = 0;
  root.delta_s = Vector::Zero(1);
  root.s = Vector::Constant(1, s0);

  for (std::size_t j = 0; j < T; ++j) {
    const std::size_t width = std::size_t{1} << j;
    for (std::size_t i = 0; i < width; ++i) {
      const NodeId id = tree.level_start_[j] + i;
      const NodeId up = tree.level_start_[j + 1] + 2 * i;
      tree.nodes_[id].first_child = up;
      tree.nodes_[id].child_count = 2;
      const double s_prev = tree.nodes_[id].s(0);
      for (int b = 0; b < 2; ++b) {
        Node& child = tree.nodes_[up + b];
        child.depth = static_cast<int>(j) + 1;
        child.index_in_depth = 2 * i + b;
        child.parent = id;
        const double xi = b == 0 ? xi_u[j] : xi_d[j];
        child.branch_probability = b == 0 ? prob_up[j] : 1.0 - prob_up[j];
        child.delta_s = Vector::Constant(1, s_prev * (xi - 1.0));
        child.s = Vector::Constant(1, s_prev * xi);
      }
    }
  }
  tree.validate();
  return tree;
}

MarketTree::IdRange MarketTree::children(NodeId id) const {
  const Node& n = nodes_.at(id);
  return {n.first_child, n.first_child + n.child_count};
}

MarketTree::IdRange MarketTree::level(int depth) const {
  if (depth < 0 || depth > horizon_) throw ValidationError("depth out of range");
  return {level_start_[depth], level_start_[depth + 1]};
}

std::vector<NodeId> MarketTree::internal_nodes() const {
  std::vector<NodeId> out;
  out.reserve(level_start_[horizon_]);
  for (NodeId id = 0; id < level_start_[horizon_]; ++id) out.push_back(id);
  return out;
}

std::vector<NodeId> MarketTree::path_to(NodeId id) const {
  std::vector<NodeId> path;
  std::optional<NodeId> cur = id;
  while (cur) {
    path.push_back(*cur);
    cur = nodes_.at(*cur).parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

Matrix MarketTree::branch_increments(NodeId id) const {
  const auto kids = children(id);
  Matrix x(dimension_, static_cast<Eigen::Index>(kids.size()));
  Eigen::Index b = 0;
  for (NodeId c : kids) x.col(b++) = nodes_[c].delta_s;
  return x;
}

Vector MarketTree::branch_probabilities(NodeId id) const {
  const auto kids = children(id);
  Vector p(static_cast<Eigen::Index>(kids.size()));
  Eigen::Index b = 0;
  for (NodeId c : kids) p(b++) = nodes_[c].branch_probability;
  return p;
}

double MarketTree::path_probability(NodeId id) const {
  double prob = 1.0;
  for (NodeId n : path_to(id)) prob *= nodes_[n].branch_probability;
  return prob;
}

MarketTree MarketTree::reweighted(std::span<const double> ratios) const {
  if (ratios.size() != nodes_.size()) throw ValidationError("one ratio per node required");
  MarketTree out = *this;
  for (NodeId id = 0; id < level_start_[horizon_]; ++id) {
    double total = 0.0;
    for (NodeId c : children(id)) {
      if (!(ratios[c] > 0.0) || !std::isfinite(ratios[c])) {
        throw ValidationError("reweighting ratio must be positive at node " + std::to_string(c));
      }
      total += nodes_[c].branch_probability * ratios[c];
    }
    for (NodeId c : children(id)) {
      out.nodes_[c].branch_probability = nodes_[c].branch_probability * ratios[c] / total;
    }
  }
  out.validate();
  return out;
}

MarketTree MarketTree::truncated(int depth) const {
  if (depth < 0 || depth > horizon_) throw ValidationError("truncation depth out of range");
  MarketTree out;
  out.horizon_ = depth;
  out.dimension_ = dimension_;
  out.level_start_.assign(level_start_.begin(), level_start_.begin() + depth + 2);
  out.nodes_.assign(nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(level_start_[depth + 1]));
  for (NodeId id = level_start_[depth]; id < level_start_[depth + 1]; ++id) {
    out.nodes_[id].first_child = 0;
    out.nodes_[id].child_count = 0;
  }
  return out;
}

MarketTree MarketTree::stopped(std::span<const NodeId> stopping_nodes) const {
  std::vector<char> is_stop(nodes_.size(), 0);
  for (NodeId n : stopping_nodes) is_stop.at(n) = 1;
  MarketTree out = *this;
  // frozen[id]: some strict ancestor of id (or id itself) is a stopping node.
  std::vector<char> frozen(nodes_.size(), 0);
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    const bool parent_frozen = n.parent && frozen[*n.parent];
    if (parent_frozen) {
      if (is_stop[id]) {
        throw ValidationError("stopping time fires twice on the path through node " +
                              std::to_string(id));
      }
      out.nodes_[id].delta_s = Vector::Zero(dimension_);
      out.nodes_[id].s = out.nodes_[*n.parent].s;
    }
    frozen[id] = parent_frozen || is_stop[id];
  }
  return out;
}

bool MarketTree::same_as(const MarketTree& other, double tol) const {
  if (horizon_ != other.horizon_ || dimension_ != other.dimension_ ||
      nodes_.size() != other.nodes_.size()) {
    return false;
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& a = nodes_[id];
    const Node& b = other.nodes_[id];
    if (a.depth != b.depth || a.parent != b.parent || a.first_child != b.first_child ||
        a.child_count != b.child_count) {
      return false;
    }
    if (std::abs(a.branch_probability - b.branch_probability) > tol) return false;
    if ((a.s - b.s).cwiseAbs().maxCoeff() > tol) return false;
    if ((a.delta_s - b.delta_s).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

void MarketTree::validate() const {
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.depth < horizon_ && n.child_count == 0) {
      throw ValidationError("node " + std::to_string(id) + " at depth " + std::to_string(n.depth) +
                            " has no children but the horizon is " + std::to_string(horizon_));
    }
    if (n.child_count == 0) continue;
    double total = 0.0;
    for (NodeId c : children(id)) {
      const double p = nodes_[c].branch_probability;
      if (!(p > 0.0 && p <= 1.0)) {
        throw ValidationError("branch probability of node " + std::to_string(c) +
                              " must lie in (0, 1]");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > kProbabilitySumTol) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "children of node " << id << " have probabilities summing to " << total;
      throw ValidationError(msg.str());
    }
  }
}

MarketTree::Builder::Builder(int dimension, Vector s0) : dimension_(dimension), s0_(std::move(s0)) {
  if (dimension < 1) throw ValidationError("dimension must be >= 1");
  if (s0_.size() != dimension) throw ValidationError("initial price has the wrong dimension");
}

MarketTree::Builder& MarketTree::Builder::add_child(long parent_key, long key, double probability,
                                                    Vector delta_s) {
  pending_.push_back({key, parent_key, probability, std::move(delta_s)});
  return *this;
}

MarketTree::Builder& MarketTree::Builder::declare_price(long key, Vector s) {
  declared_prices_.emplace_back(key, std::move(s));
  return *this;
}

MarketTree MarketTree::Builder::Build() const {
  std::map<long, std::size_t> by_key;
  std::map<long, std::vector<std::size_t>> kids;
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    const Pending& p = pending_[i];
    if (p.key == kRootKey || !by_key.emplace(p.key, i).second) {
      throw ValidationError("duplicate node id " + std::to_string(p.key));
    }
    if (p.delta_s.size() != dimension_) {
      throw ValidationError("node " + std::to_string(p.key) + ": delta_s has the wrong dimension");
    }
    if (!p.delta_s.allFinite()) {
      throw ValidationError("node " + std::to_string(p.key) + ": delta_s must be finite");
    }
    if (!(p.probability > 0.0 && p.probability <= 1.0)) {
      throw ValidationError("node " + std::to_string(p.key) + ": probability must lie in (0, 1]");
    }
    kids[p.parent_key].push_back(i);
  }
  for (const auto& [parent, list] : kids) {
    if (parent != kRootKey && !by_key.contains(parent)) {
      throw ValidationError("node " + std::to_string(pending_[list.front()].key) +
                            " refers to unknown parent " + std::to_string(parent));
    }
  }

  MarketTree tree;
  tree.dimension_ = dimension_;
  std::map<long, NodeId> id_of;

  Node root;
  root.delta_s = Vector::Zero(dimension_);
  root.s = s0_;
  tree.nodes_.push_back(root);
  id_of[kRootKey] = 0;

  // Breadth-first renumbering; children keep declaration order.
  std::deque<std::pair<long, NodeId>> queue{{kRootKey, 0}};
  while (!queue.empty()) {
    auto [key, id] = queue.front();
    queue.pop_front();
    auto it = kids.find(key);
    if (it == kids.end()) continue;
    tree.nodes_[id].first_child = tree.nodes_.size();
    tree.nodes_[id].child_count = it->second.size();
    for (std::size_t idx : it->second) {
      const Pending& p = pending_[idx];
      Node child;
      child.depth = tree.nodes_[id].depth + 1;
      child.parent = id;
      child.branch_probability = p.probability;
      child.delta_s = p.delta_s;
      child.s = tree.nodes_[id].s + p.delta_s;
      const NodeId cid = tree.nodes_.size();
      tree.nodes_.push_back(std::move(child));
      id_of[p.key] = cid;
      queue.emplace_back(p.key, cid);
    }
  }
  if (tree.nodes_.size() != pending_.size() + 1) {
    throw ValidationError("some nodes are not reachable from the root");
  }

  int horizon = 0;
  for (const Node& n : tree.nodes_) horizon = std::max(horizon, n.depth);
  if (horizon < 1) throw ValidationError("tree needs at least one period");
  tree.horizon_ = horizon;
  for (NodeId id = 0; id < tree.nodes_.size(); ++id) {
    if (tree.nodes_[id].child_count == 0 && tree.nodes_[id].depth != horizon) {
      throw ValidationError("leaf at depth " + std::to_string(tree.nodes_[id].depth) +
                            " but the horizon is " + std::to_string(horizon));
    }
  }
  tree.level_start_.assign(static_cast<std::size_t>(horizon) + 2, tree.nodes_.size());
  std::vector<std::size_t> seen(static_cast<std::size_t>(horizon) + 1, 0);
  for (NodeId id = tree.nodes_.size(); id-- > 0;) {
    tree.level_start_[tree.nodes_[id].depth] = id;
  }
  for (NodeId id = 0; id < tree.nodes_.size(); ++id) {
    tree.nodes_[id].index_in_depth = seen[tree.nodes_[id].depth]++;
  }

  for (const auto& [key, s] : declared_prices_) {
    auto it = id_of.find(key);
    if (it == id_of.end()) throw ValidationError("price declared for unknown node " + std::to_string(key));
    if (s.size() != dimension_ || (s - tree.nodes_[it->second].s).cwiseAbs().maxCoeff() > kPriceTol) {
      throw ValidationError("declared price at node " + std::to_string(key) +
                            " differs from parent price plus increment");
    }
    // Keep the declared value so exported trees re-ingest bit for bit.
    tree.nodes_[it->second].s = s;
  }
  tree.validate();
  return tree;
}

PredictableProcess::PredictableProcess(const MarketTree& tree) : values_(tree.size()) {}

PredictableProcess::PredictableProcess(const MarketTree& tree, const Vector& constant)
    : values_(tree.size()) {
  for (NodeId id : tree.internal_nodes()) values_[id] = constant;
}

const Vector& PredictableProcess::at(NodeId id) const {
  if (!defined_at(id)) {
    throw ValidationError("predictable process read at node " + std::to_string(id) +
                          " where it is undefined");
  }
  return values_[id];
}

void PredictableProcess::set(NodeId id, Vector v) { values_.at(id) = std::move(v); }

std::vector<double> conditional_expectation(const MarketTree& tree, const AdaptedProcess& x,
                                            int at_depth, std::optional<int> from_depth) {
  const int from = from_depth.value_or(at_depth + 1);
  if (at_depth < 0 || from > tree.horizon() || from <= at_depth) {
    throw ValidationError("conditional expectation depth out of range");
  }
  if (x.size() != tree.size()) throw ValidationError("process is not bound to this tree");

  // Roll the values back one level at a time.
  std::vector<double> level_values(x.values().begin() + static_cast<std::ptrdiff_t>(tree.level(from).first),
                                   x.values().begin() + static_cast<std::ptrdiff_t>(tree.level(from).last));
  for (int depth = from - 1; depth >= at_depth; --depth) {
    const auto parents = tree.level(depth);
    const NodeId child_base = tree.level(depth + 1).first;
    std::vector<double> rolled;
    rolled.reserve(parents.size());
    for (NodeId id : parents) {
      rolled.push_back(expect_children(tree, id, [&](NodeId c) { return level_values[c - child_base]; }));
    }
    level_values = std::move(rolled);
  }
  return level_values;
}

AdmissibleSet::AdmissibleSet(Matrix increments) : increments_(std::move(increments)) {
  if (increments_.rows() == 1) {
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    for (Eigen::Index b = 0; b < increments_.cols(); ++b) {
      const double x = increments_(0, b);
      if (x > 0.0) lower = std::max(lower, -1.0 / x);
      if (x < 0.0) upper = std::min(upper, -1.0 / x);
    }
    interval_ = Interval{lower, upper};
  }
}

double AdmissibleSet::margin(const Vector& theta) const {
  if (increments_.cols() == 0) return 1.0;
  return 1.0 + (theta.transpose() * increments_).minCoeff();
}

double AdmissibleSet::ray_exit(const Vector& direction) const {
  double exit = std::numeric_limits<double>::infinity();
  for (Eigen::Index b = 0; b < increments_.cols(); ++b) {
    const double slope = direction.dot(increments_.col(b));
    if (slope < 0.0) exit = std::min(exit, -1.0 / slope);
  }
  return exit;
}

AdmissibleSet admissible_set(const MarketTree& tree, NodeId id) {
  if (tree.is_leaf(id)) throw ValidationError("admissible set requested at leaf " + std::to_string(id));
  return AdmissibleSet(tree.branch_increments(id));
}

}  // namespace hara

#include "hara/hellinger.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "hara/error.h"

namespace hara {
namespace {

constexpr int kTiltRetries = 50;
constexpr int kTiltNewtonIterations = 100;
// Two free dimensions: at most 10^6 grid points per node.
constexpr int kMaxGridPerAxis2d = 1000;
constexpr double kCandidateDefectTol = 1e-10;

double fq(double q, double x) { return f_q(q, x).to_double(); }

double rel(double err, double scale) { return err / std::max(1.0, std::abs(scale)); }

// Node increment sum_b w_b f_q(r_b - 1).
double node_increment(double q, const Vector& w, const Vector& r) {
  double acc = 0.0;
  for (Eigen::Index b = 0; b < w.size(); ++b) acc += w(b) * fq(q, r(b) - 1.0);
  return acc;
}

Vector node_ratios(const MarketTree& tree, NodeId id, const DensityProcess& z) {
  const auto kids = tree.children(id);
  Vector r(static_cast<Eigen::Index>(kids.size()));
  for (NodeId c : kids) r(static_cast<Eigen::Index>(c - kids.first)) = z.ratio(c);
  return r;
}

// Martingale density r_b = exp(l_b + lambda'x_b) / sum_b w exp(l_b + lambda'x_b) with
// lambda minimising log sum_b w exp(l_b + lambda'x_b), so that sum_b w r_b x_b = 0.
std::optional<Vector> exponential_tilt(const Matrix& x, const Vector& w, const Vector& l) {
  const Eigen::Index d = x.rows();
  Vector lambda = Vector::Zero(d);
  auto ratios = [&](const Vector& lam) {
    Vector e = (l + x.transpose() * lam);
    e.array() -= e.maxCoeff();
    Vector r = e.array().exp();
    return Vector(r / w.dot(r));
  };
  for (int it = 0; it < kTiltNewtonIterations; ++it) {
    const Vector r = ratios(lambda);
    const Vector wr = w.cwiseProduct(r);
    const Vector grad = x * wr;
    if (grad.norm() <= 1e-15 * std::max(1.0, x.cwiseAbs().maxCoeff())) break;
    const Matrix hess = x * wr.asDiagonal() * x.transpose() - grad * grad.transpose();
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(hess);
    Vector step = cod.solve(grad);
    if (!step.allFinite()) return std::nullopt;
    // Damped on the convex objective log sum w exp(.).
    auto objective = [&](const Vector& lam) {
      Vector e = l + x.transpose() * lam;
      const double m = e.maxCoeff();
      return m + std::log(w.dot(Vector((e.array() - m).exp())));
    };
    const double f0 = objective(lambda);
    double t = 1.0;
    while (t > 1e-20 && !(objective(lambda - t * step) <= f0 - 1e-4 * t * grad.dot(step))) t *= 0.5;
    if (t <= 1e-20) break;
    lambda -= t * step;
  }
  Vector r = ratios(lambda);
  if (!r.allFinite() || (x * w.cwiseProduct(r)).norm() > 1e-8 * std::max(1.0, x.cwiseAbs().maxCoeff())) {
    return std::nullopt;
  }
  // Newton stalls around 1e-13; the last digits come from a least-norm
  // correction onto the two affine constraints.
  Matrix a(d + 1, w.size());
  a.row(0) = w.transpose();
  for (Eigen::Index i = 0; i < d; ++i) a.row(i + 1) = w.cwiseProduct(x.row(i).transpose()).transpose();
  Vector target = Vector::Zero(d + 1);
  target(0) = 1.0;
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a * a.transpose());
    r -= a.transpose() * cod.solve(Vector(a * r - target));
  }
  if ((r.array() <= 0.0).any()) return std::nullopt;
  return r;
}

// Null space of the martingale-density constraints [w'; (w .* x)'] (rows), as columns.
Matrix constraint_null_space(const Matrix& x, const Vector& w) {
  const Eigen::Index k = w.size();
  Matrix a(x.rows() + 1, k);
  a.row(0) = w.transpose();
  for (Eigen::Index i = 0; i < x.rows(); ++i) a.row(i + 1) = w.cwiseProduct(x.row(i).transpose()).transpose();
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double threshold = 1e-12 * std::max(1.0, s.size() ? s(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > threshold ? 1 : 0;
  return svd.matrixV().rightCols(k - rank);
}

DominationNodeReport blank_node(NodeId id, double q, const BranchWeights& node, const Vector& r_tilde) {
  DominationNodeReport n;
  n.node = id;
  const Vector& w = node.weights;
  n.candidate_increment = node_increment(q, w, r_tilde);
  const double scale = std::max(1.0, node.increments.cwiseAbs().maxCoeff());
  const double defect = std::max(std::abs(w.dot(r_tilde) - 1.0),
                                 (node.increments * w.cwiseProduct(r_tilde)).norm() / scale);
  if (defect > kCandidateDefectTol || (r_tilde.array() <= 0.0).any()) {
    n.candidate_invalid = true;
    n.note = "candidate is not a martingale density here (defect " + std::to_string(defect) + ")";
  }
  n.best_competitor_increment = std::numeric_limits<double>::infinity();
  n.worst_margin = std::numeric_limits<double>::infinity();
  return n;
}

void record(DominationNodeReport& n, double competitor) {
  n.best_competitor_increment = std::min(n.best_competitor_increment, competitor);
  n.worst_margin = std::min(n.worst_margin, competitor - n.candidate_increment);
  ++n.competitors;
}

void finalize(DominationReport& report) {
  report.worst_margin = std::numeric_limits<double>::infinity();
  bool invalid = false;
  for (const auto& n : report.nodes) {
    invalid = invalid || n.candidate_invalid;
    if (n.skipped || n.competitors == 0) continue;
    report.worst_margin = std::min(report.worst_margin, n.worst_margin);
  }
  if (!std::isfinite(report.worst_margin)) report.worst_margin = 0.0;
  report.pass = !invalid && report.worst_margin >= -report.slack;
}

}  // namespace

DensityProcess DensityProcess::FromRatios(const MarketTree& tree, std::vector<double> ratios, double tol) {
  if (ratios.size() != tree.size()) throw ValidationError("density needs one ratio per node");
  ratios[kRoot] = 1.0;
  for (NodeId id = 1; id < tree.size(); ++id) {
    if (!(ratios[id] > 0.0) || !std::isfinite(ratios[id])) {
      throw ValidationError("density ratio must be positive at node " + std::to_string(id));
    }
  }
  for (NodeId id : tree.internal_nodes()) {
    const double m = expect_children(tree, id, [&](NodeId c) { return ratios[c]; });
    if (std::abs(m - 1.0) > tol) {
      throw ValidationError("density is not a martingale at node " + std::to_string(id) +
                            " (conditional mean of ratios " + std::to_string(m) + ")");
    }
  }
  DensityProcess z;
  z.values_ = AdaptedProcess(tree.size(), 1.0);
  for (NodeId id = 1; id < tree.size(); ++id) z.values_[id] = z.values_[*tree.node(id).parent] * ratios[id];
  z.ratios_ = std::move(ratios);
  return z;
}

DensityProcess DensityProcess::Unit(const MarketTree& tree) {
  return FromRatios(tree, std::vector<double>(tree.size(), 1.0));
}

double martingale_defect(const MarketTree& tree, const std::vector<double>& ratios) {
  double worst = 0.0;
  for (NodeId id : tree.internal_nodes()) {
    worst = std::max(worst, std::abs(expect_children(tree, id, [&](NodeId c) { return ratios[c]; }) - 1.0));
  }
  return worst;
}

HellingerIncrements hellinger_process(const MarketTree& tree, const DensityProcess& z, double q,
                                      const DensityProcess* base, HellingerView view) {
  if (z.size() != tree.size() || (base && base->size() != tree.size())) {
    throw ValidationError("density does not match the tree");
  }
  HellingerIncrements h;
  h.q = q;
  h.increments = AdaptedProcess(tree.size());
  h.cumulative = AdaptedProcess(tree.size());

  if (base == nullptr) {
    if (martingale_defect(tree, z.ratios()) > 1e-12) throw ValidationError("density is not a martingale");
    for (NodeId id : tree.internal_nodes()) {
      h.increments[id] = expect_children(tree, id, [&](NodeId c) { return fq(q, z.ratio(c) - 1.0); });
    }
  } else {
    const MarketTree reweighted = tree.reweighted(base->ratios());
    if (martingale_defect(reweighted, z.ratios()) > 1e-12) {
      throw ValidationError("density is not a martingale under the base-reweighted tree");
    }
    for (NodeId id : tree.internal_nodes()) {
      if (view == HellingerView::kWeightedUnderOriginal) {
        h.increments[id] =
            expect_children(tree, id, [&](NodeId c) { return base->ratio(c) * fq(q, z.ratio(c) - 1.0); });
      } else {
        h.increments[id] = expect_children(reweighted, id, [&](NodeId c) { return fq(q, z.ratio(c) - 1.0); });
      }
    }
  }
  for (NodeId id : tree.internal_nodes()) {
    for (NodeId c : tree.children(id)) h.cumulative[c] = h.cumulative[id] + h.increments[id];
  }
  return h;
}

DensityProcess mhm_density_from_theta(const MarketTree& tree, const PredictableProcess& theta_hat, double p) {
  std::vector<double> ratios(tree.size(), 1.0);
  for (NodeId id : tree.internal_nodes()) {
    const Vector& theta = theta_hat.at(id);
    double norm = 0.0;
    for (NodeId c : tree.children(id)) {
      const double g = 1.0 + theta.dot(tree.node(c).delta_s);
      if (!(g > 0.0)) {
        throw DomainError("portfolio rate at node " + std::to_string(id) + " is not interior (gross return " +
                          std::to_string(g) + " on branch to node " + std::to_string(c) + ")");
      }
      ratios[c] = std::exp((p - 1.0) * std::log(g));
      norm += tree.node(c).branch_probability * ratios[c];
    }
    for (NodeId c : tree.children(id)) ratios[c] /= norm;
  }
  return DensityProcess::FromRatios(tree, std::move(ratios));
}

double martingale_density_defect(const MarketTree& tree, const DensityProcess& z) {
  double worst = 0.0;
  for (NodeId id : tree.internal_nodes()) {
    Vector acc = Vector::Zero(tree.dimension());
    for (NodeId c : tree.children(id)) acc += tree.node(c).branch_probability * z.ratio(c) * tree.node(c).delta_s;
    worst = std::max(worst, acc.cwiseAbs().maxCoeff());
  }
  return worst;
}

DominationReport verify_mhm_domination(const MarketTree& tree, const DensityProcess& z_tilde, double q,
                                       int competitors, std::uint64_t seed, double slack) {
  DominationReport report;
  report.q = q;
  report.slack = slack;
  report.competitors_per_node = competitors;
  for (NodeId id : tree.internal_nodes()) {
    const BranchWeights node = node_branches(tree, id);
    DominationNodeReport n = blank_node(id, q, node, node_ratios(tree, id, z_tilde));
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < competitors; ++i) {
      std::optional<Vector> r;
      for (int attempt = 0; attempt < kTiltRetries && !r; ++attempt) {
        Vector l(node.weights.size());
        for (Eigen::Index b = 0; b < l.size(); ++b) l(b) = normal(rng);
        r = exponential_tilt(node.increments, node.weights, l);
      }
      if (!r) {
        n.skipped = true;
        n.note = "no positive martingale density found";
        break;
      }
      record(n, node_increment(q, node.weights, *r));
    }
    report.nodes.push_back(std::move(n));
  }
  finalize(report);
  return report;
}

DominationReport grid_mhm_domination(const MarketTree& tree, const DensityProcess& z_tilde, double q,
                                     int points_per_dimension, double slack) {
  DominationReport report;
  report.q = q;
  report.slack = slack;
  for (NodeId id : tree.internal_nodes()) {
    const BranchWeights node = node_branches(tree, id);
    const Vector r0 = node_ratios(tree, id, z_tilde);
    DominationNodeReport n = blank_node(id, q, node, r0);
    const Matrix v = constraint_null_space(node.increments, node.weights);
    const Eigen::Index free = v.cols();
    if (free == 0) {
      record(n, n.candidate_increment);
      if (n.note.empty()) n.note = "single martingale density";
    } else if (free == 1) {
      // r0 + t v > 0.
      double lo = -std::numeric_limits<double>::infinity();
      double hi = std::numeric_limits<double>::infinity();
      for (Eigen::Index b = 0; b < v.rows(); ++b) {
        if (v(b, 0) > 0.0) lo = std::max(lo, -r0(b) / v(b, 0));
        if (v(b, 0) < 0.0) hi = std::min(hi, -r0(b) / v(b, 0));
      }
      for (int i = 0; i < points_per_dimension; ++i) {
        const double t = lo + (hi - lo) * (i + 0.5) / points_per_dimension;
        const Vector r = r0 + t * v.col(0);
        if ((r.array() <= 0.0).any()) continue;
        record(n, node_increment(q, node.weights, r));
      }
    } else if (free == 2) {
      // Bounding box of the polygon {t : r0 + V t > 0} from its vertices.
      Vector lo = Vector::Constant(2, std::numeric_limits<double>::infinity());
      Vector hi = Vector::Constant(2, -std::numeric_limits<double>::infinity());
      for (Eigen::Index a = 0; a < v.rows(); ++a) {
        for (Eigen::Index b = a + 1; b < v.rows(); ++b) {
          Matrix m(2, 2);
          m << v.row(a), v.row(b);
          if (std::abs(m.determinant()) < 1e-14) continue;
          const Vector t = m.partialPivLu().solve(Vector((Vector(2) << -r0(a), -r0(b)).finished()));
          const Vector r = r0 + v * t;
          if ((r.array() < -1e-12).any()) continue;
          lo = lo.cwiseMin(t);
          hi = hi.cwiseMax(t);
        }
      }
      const int m = std::min(points_per_dimension, kMaxGridPerAxis2d);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
          Vector t(2);
          t << lo(0) + (hi(0) - lo(0)) * (i + 0.5) / m, lo(1) + (hi(1) - lo(1)) * (j + 0.5) / m;
          const Vector r = r0 + v * t;
          if ((r.array() <= 0.0).any()) continue;
          record(n, node_increment(q, node.weights, r));
        }
      }
    } else {
      n.skipped = true;
      n.note = std::to_string(free) + " free dimensions; grid capped at 2";
    }
    report.nodes.push_back(std::move(n));
  }
  report.competitors_per_node = points_per_dimension;
  finalize(report);
  return report;
}

DoobDecomposition doob_decomposition(const MarketTree& tree, const AdaptedProcess& d) {
  if (d.size() != tree.size()) throw ValidationError("process does not match the tree");
  const double sign = d[kRoot] < 0.0 ? -1.0 : 1.0;
  for (NodeId id = 0; id < tree.size(); ++id) {
    if (!(sign * d[id] > 0.0)) {
      throw ValidationError("Doob decomposition needs a nowhere-zero process of constant sign (node " +
                            std::to_string(id) + ")");
    }
  }
  std::vector<double> ratios(tree.size(), 1.0);
  DoobDecomposition out;
  out.a_d = AdaptedProcess(tree.size());
  for (NodeId id : tree.internal_nodes()) {
    const double mean = expect_children(tree, id, [&](NodeId c) { return d[c]; });
    for (NodeId c : tree.children(id)) {
      ratios[c] = d[c] / mean;
      out.a_d[c] = out.a_d[id] + std::log(mean / d[id]);
    }
  }
  out.z_d = DensityProcess::FromRatios(tree, std::move(ratios));
  return out;
}

ReconstructionReport check_reconstruction_power(const MarketTree& tree, const ForwardUtilityResult& result,
                                                double tolerance) {
  const RiskAversion& ra = result.risk_aversion;
  if (ra.is_log()) throw ValidationError("reconstruction check needs a power result");
  const double p = ra.p();
  const double q = ra.q();

  ReconstructionReport report;
  report.tolerance = tolerance;
  const DoobDecomposition doob = doob_decomposition(tree, result.d);
  const MarketTree q_tree = tree.reweighted(doob.z_d.ratios());
  report.z_tilde = mhm_density_from_theta(q_tree, result.theta_hat, p);
  report.max_density_defect = martingale_density_defect(q_tree, report.z_tilde);
  report.hellinger =
      hellinger_process(tree, report.z_tilde, q, &doob.z_d, HellingerView::kWeightedUnderOriginal);
  const HellingerIncrements other =
      hellinger_process(tree, report.z_tilde, q, &doob.z_d, HellingerView::kUnderReweighted);

  // Rebuilt D(node) = D(0) Z_D(node) prod over ancestors of (1 + q(q-1) dh)^(p-1).
  std::vector<double> log_factor(tree.size(), 0.0);
  const double d0 = result.d[kRoot];
  for (NodeId id : tree.internal_nodes()) {
    const double dh = report.hellinger.increments[id];
    report.max_view_discrepancy = std::max(report.max_view_discrepancy, std::abs(dh - other.increments[id]));
    const double base = 1.0 + q * (q - 1.0) * dh;
    const Vector& theta = result.theta_hat.at(id);
    const double eq_gp = expect_children(q_tree, id, [&](NodeId c) {
      return std::pow(1.0 + theta.dot(tree.node(c).delta_s), p);
    });
    report.max_step_identity_error =
        std::max(report.max_step_identity_error, rel(std::abs(std::pow(base, 1.0 - p) - eq_gp), eq_gp));
    for (NodeId c : tree.children(id)) {
      log_factor[c] = log_factor[id] + (p - 1.0) * std::log(base);
      const double rebuilt = d0 * doob.z_d.value(c) * std::exp(log_factor[c]);
      const double err = rel(std::abs(rebuilt - result.d[c]), result.d[c]);
      if (err > report.max_error) {
        report.max_error = err;
        report.worst_node = c;
      }
    }
  }
  report.pass = report.max_error <= tolerance && report.max_step_identity_error <= tolerance &&
                report.max_view_discrepancy <= 1e-13 && report.max_density_defect <= 1e-12;
  return report;
}

LogIdentityReport check_log_identity(const MarketTree& tree, const ForwardUtilityResult& result,
                                     double ratio_tolerance, double tolerance) {
  if (!result.risk_aversion.is_log()) throw ValidationError("log identity check needs a log result");
  LogIdentityReport report;
  report.ratio_tolerance = ratio_tolerance;
  report.tolerance = tolerance;

  const DoobDecomposition doob = doob_decomposition(tree, result.d_hat);
  const MarketTree q_tree = tree.reweighted(doob.z_d.ratios());
  report.z_tilde = mhm_density_from_theta(q_tree, result.theta_hat, 0.0);
  report.hellinger = hellinger_process(q_tree, report.z_tilde, 0.0);

  for (NodeId id : tree.internal_nodes()) {
    const Vector& theta = result.theta_hat.at(id);
    const double growth =
        expect_children(q_tree, id, [&](NodeId c) { return std::log1p(theta.dot(tree.node(c).delta_s)); });
    report.increment_error = std::max(report.increment_error, std::abs(growth - report.hellinger.increments[id]));
    for (NodeId c : tree.children(id)) {
      const double inv_g = 1.0 / (1.0 + theta.dot(tree.node(c).delta_s));
      report.ratio_error = std::max(report.ratio_error, rel(std::abs(report.z_tilde.ratio(c) - inv_g), inv_g));
    }
    auto x = [&](NodeId n) { return result.d_bar[n] / result.d_hat[n] + report.hellinger.cumulative[n]; };
    const double lhs = expect_children(q_tree, id, x);
    report.martingale_error = std::max(report.martingale_error, rel(std::abs(lhs - x(id)), x(id)));
  }
  report.pass = report.ratio_error <= ratio_tolerance && report.increment_error <= tolerance &&
                report.martingale_error <= tolerance;
  return report;
}

}  // namespace hara

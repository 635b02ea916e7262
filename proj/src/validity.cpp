#include "ivt/validity.hpp"

#include "ivt/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

namespace ivt {

std::string to_string(Decision d) { return d == Decision::reject ? "reject" : "consistent"; }

TestReport TestReport::make(std::string test, double statistic, double threshold,
                            std::vector<std::pair<std::string, double>> diagnostics) {
  return {std::move(test), statistic, threshold,
          statistic > threshold ? Decision::reject : Decision::consistent, std::move(diagnostics)};
}

std::optional<double> TestReport::diagnostic(const std::string& name) const {
  for (const auto& [k, v] : diagnostics)
    if (k == name) return v;
  return std::nullopt;
}

double ContinuityParams::proof_constant(double alpha, double beta, double ky, double kx) {
  return 2.0 * std::max(ky * std::pow(kx, beta / alpha), ky * kx);
}

ContinuityParams ContinuityParams::with_proof_constant(double alpha, double beta, double gamma,
                                                       double delta, double ky, double kx,
                                                       double jump_threshold) {
  ContinuityParams p{alpha, beta, gamma, delta, 1, ky, kx, jump_threshold,
                     proof_constant(alpha, beta, ky, kx)};
  p.validate();
  return p;
}

void ContinuityParams::validate() const {
  for (double v : {alpha, beta, gamma, delta, ky, kx, jump_threshold, c_bound})
    if (!(v > 0.0) || !std::isfinite(v))
      throw InputError("continuity parameters must be finite and strictly positive");
  if (d != 1) throw InputError("only univariate processes are supported (d = 1)");
}

std::pair<double, double> ContinuityParams::exponents() const {
  if (beta > alpha) return {2.0 * alpha * delta, d + beta * gamma};
  return {2.0 * delta, d + gamma};
}

namespace {

void check_law(const Eigen::VectorXd& p, const char* what) {
  if (p.size() == 0 || !p.allFinite() || (p.array() < 0.0).any())
    throw InputError(std::string(what) + " must be non-empty, finite and non-negative");
  if (std::abs(p.sum() - 1.0) > kInputTolerance)
    throw InputError(std::string(what) + " sums to " + std::to_string(p.sum()) + ", expected 1");
}

// Kuhn's augmenting-path matching on the positive entries of `w`.
bool augment(const Eigen::MatrixXd& w, double eps, Eigen::Index row, std::vector<bool>& seen,
             std::vector<Eigen::Index>& col_owner) {
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    if (!(w(row, c) > eps) || seen[static_cast<std::size_t>(c)]) continue;
    seen[static_cast<std::size_t>(c)] = true;
    auto& owner = col_owner[static_cast<std::size_t>(c)];
    if (owner < 0 || augment(w, eps, owner, seen, col_owner)) {
      owner = row;
      return true;
    }
  }
  return false;
}

std::optional<std::vector<Eigen::Index>> perfect_matching(const Eigen::MatrixXd& w, double eps) {
  const Eigen::Index n = w.rows();
  std::vector<Eigen::Index> col_owner(static_cast<std::size_t>(n), -1);
  for (Eigen::Index r = 0; r < n; ++r) {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    if (!augment(w, eps, r, seen, col_owner)) return std::nullopt;
  }
  std::vector<Eigen::Index> row_to_col(static_cast<std::size_t>(n), -1);
  for (Eigen::Index c = 0; c < n; ++c) row_to_col[static_cast<std::size_t>(col_owner[static_cast<std::size_t>(c)])] = c;
  return row_to_col;
}

// Birkhoff-von Neumann peeling of the conditionals padded to a square,
// doubly stochastic matrix with dummy rows. Each permutation gives one tuple
// of distinct support points.
std::vector<std::pair<std::vector<std::size_t>, double>> distinct_tuples(
    const DiscreteFamily& family, const Eigen::VectorXd& load) {
  const auto m = static_cast<Eigen::Index>(family.conditionals.size());
  const auto s = static_cast<Eigen::Index>(family.support.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(s, s);
  for (Eigen::Index i = 0; i < m; ++i) w.row(i) = family.conditionals[static_cast<std::size_t>(i)].transpose();
  if (s > m) {
    const Eigen::VectorXd slack = (1.0 - load.array()).max(0.0).matrix() / static_cast<double>(s - m);
    for (Eigen::Index r = m; r < s; ++r) w.row(r) = slack.transpose();
  }
  std::map<std::vector<std::size_t>, double> merged;
  constexpr double eps = 1e-13;
  while (w.topRows(m).sum() > kInternalTolerance) {
    const auto match = perfect_matching(w, eps);
    if (!match) break;
    double weight = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < s; ++r) weight = std::min(weight, w(r, (*match)[static_cast<std::size_t>(r)]));
    std::vector<std::size_t> tuple;
    for (Eigen::Index r = 0; r < s; ++r) {
      const Eigen::Index c = (*match)[static_cast<std::size_t>(r)];
      w(r, c) = std::max(0.0, w(r, c) - weight);
      if (r < m) tuple.push_back(static_cast<std::size_t>(c));
    }
    merged[tuple] += weight;
  }
  return {merged.begin(), merged.end()};
}

}  // namespace

void DiscreteFamily::validate() const {
  if (support.empty()) throw InputError("discrete support is empty");
  for (std::size_t i = 1; i < support.size(); ++i)
    if (!(support[i] > support[i - 1])) throw InputError("discrete support must be strictly increasing");
  if (conditionals.size() < 2) throw InputError("need at least two instrument values");
  if (static_cast<std::size_t>(pz.size()) != conditionals.size())
    throw InputError("need one pz weight per conditional");
  check_law(pz, "pz");
  if ((pz.array() <= 0.0).any()) throw InputError("pz weights must be positive");
  for (const auto& c : conditionals) {
    if (static_cast<std::size_t>(c.size()) != support.size())
      throw InputError("conditional length differs from the support size");
    check_law(c, "conditional");
  }
}

FeasibilityResult discrete_generator_feasible(const DiscreteFamily& family) {
  family.validate();
  const std::size_t m = family.conditionals.size();
  const std::size_t s = family.support.size();
  if (m > 2 && (m > kMaxDiscreteInstruments || s > kMaxDiscreteSupport))
    throw InputError("feasibility with " + std::to_string(m) + " instrument values is limited to " +
                     std::to_string(kMaxDiscreteInstruments) + " values and support size " +
                     std::to_string(kMaxDiscreteSupport));
  Eigen::VectorXd load = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s));
  for (const auto& c : family.conditionals) load += c;

  FeasibilityResult out;
  Eigen::Index worst = 0;
  out.max_load = load.maxCoeff(&worst);
  out.x_index = static_cast<std::size_t>(worst);
  out.excess = std::max(0.0, out.max_load - 1.0);
  // The events {X_i = x} are disjoint under any injective coupling, so a
  // load above one is infeasible; otherwise the padded matrix is doubly
  // stochastic and its permutation decomposition is a witness.
  out.feasible = out.excess <= kInternalTolerance;
  if (!out.feasible) return out;

  out.tuples = distinct_tuples(family, load);
  if (m == 2) {
    Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
    for (const auto& [t, w] : out.tuples)
      plan(static_cast<Eigen::Index>(t[0]), static_cast<Eigen::Index>(t[1])) += w;
    const auto law = [&](const Eigen::VectorXd& p) {
      return GridDistribution::discrete(family.support, std::vector<double>(p.data(), p.data() + p.size()));
    };
    out.coupling = CouplingMatrix{law(family.conditionals[0]), law(family.conditionals[1]), plan};
    out.coupling->validate();
  }
  return out;
}

double minimal_collision_mass(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw InputError("laws must share one support");
  check_law(p, "p");
  check_law(q, "q");
  return (p.array() + q.array() - 1.0).max(0.0).sum();
}

void DiscreteJoint::validate() const {
  if (conditionals.empty()) throw InputError("discrete joint has no conditionals");
  for (const auto& c : conditionals) {
    if (c.rows() != conditionals.front().rows() || c.cols() != conditionals.front().cols() ||
        c.size() == 0)
      throw InputError("discrete conditionals must share one non-empty shape");
    if (!c.allFinite() || (c.array() < 0.0).any())
      throw InputError("discrete conditional masses must be finite and non-negative");
    if (std::abs(c.sum() - 1.0) > kInputTolerance)
      throw InputError("discrete conditional sums to " + std::to_string(c.sum()) + ", expected 1");
  }
}

TestReport instrumental_inequality(const DiscreteJoint& joint) {
  joint.validate();
  Eigen::MatrixXd envelope = joint.conditionals.front();
  for (const auto& c : joint.conditionals) envelope = envelope.cwiseMax(c);
  Eigen::Index worst = 0;
  const double stat = envelope.colwise().sum().maxCoeff(&worst);
  return TestReport::make("pearl", stat, 1.0, {{"worst_x", static_cast<double>(worst)}});
}

double comonotone_moment(const GridMeasure2D& a, const GridMeasure2D& b, double p) {
  const GridDistribution ax = a.x_marginal();
  const GridDistribution bx = b.x_marginal();
  const GridDistribution ay = a.y_marginal();
  const GridDistribution by = b.y_marginal();
  std::vector<double> levels{0.0, 1.0};
  for (const auto* d : {&ax, &bx, &ay, &by})
    for (std::size_t i = 0; i <= d->pieces().size(); ++i)
      levels.push_back(std::clamp(d->mass_before(i), 0.0, 1.0));
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  // 8-point Gauss-Legendre; all four quantile functions are affine between
  // consecutive levels.
  static constexpr std::array<double, 4> nodes{0.1834346424956498, 0.5255324099163290,
                                               0.7966664774136267, 0.9602898564975363};
  static constexpr std::array<double, 4> weights{0.3626837833783620, 0.3137066458778873,
                                                 0.2223810344533745, 0.1012285362903763};
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < levels.size(); ++k) {
    const double lo = levels[k];
    const double hi = levels[k + 1];
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    if (!(half > 0.0)) continue;
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      for (double sign : {-1.0, 1.0}) {
        const double t = mid + sign * half * nodes[n];
        const double dx = quantile(ax, t) - quantile(bx, t);
        const double dy = quantile(ay, t) - quantile(by, t);
        total += weights[n] * half * std::pow(dx * dx + dy * dy, 0.5 * p);
      }
    }
  }
  return total;
}

TestReport continuity_moment_statistic(const JointLaw& joint, const ContinuityParams& params) {
  params.validate();
  std::vector<std::size_t> entries;
  for (std::size_t i = 0; i < joint.size(); ++i)
    if (!joint.is_atom_entry(i)) entries.push_back(i);
  if (entries.size() < 3)
    throw DegenerateGridError("moment test needs at least 3 non-atomic z-grid points, got " +
                              std::to_string(entries.size()));
  const auto [p, q] = params.exponents();
  struct Pair {
    double gap;
    std::size_t a;
    std::size_t b;
  };
  std::vector<Pair> pairs;
  for (std::size_t k = 0; k + 1 < entries.size(); ++k)
    pairs.push_back({joint.z_grid()[entries[k + 1]] - joint.z_grid()[entries[k]], entries[k],
                     entries[k + 1]});
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& x, const Pair& y) { return x.gap < y.gap; });
  pairs.resize(3);

  std::vector<std::pair<std::string, double>> diag{{"p", p}, {"q", q}};
  double stat = 0.0;
  std::size_t worst = 0;
  std::vector<double> ratios;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pr = pairs[k];
    const double moment =
        comonotone_moment(joint.conditionals()[pr.a], joint.conditionals()[pr.b], p);
    const double ratio = moment / std::pow(pr.gap, q);
    ratios.push_back(ratio);
    diag.emplace_back("gap_" + std::to_string(k + 1), pr.gap);
    diag.emplace_back("ratio_" + std::to_string(k + 1), ratio);
    if (ratio > stat || k == 0) {
      stat = ratio;
      worst = k;
    }
  }
  // Ratios listed from the finest gap; growth toward it signals divergence.
  const bool growing = ratios[0] > ratios[1] && ratios[1] > ratios[2];
  diag.emplace_back("diverging", growing ? 1.0 : 0.0);
  diag.emplace_back("worst_z1", joint.z_grid()[pairs[worst].a]);
  diag.emplace_back("worst_z2", joint.z_grid()[pairs[worst].b]);
  return TestReport::make("moment", stat, params.c_bound, std::move(diag));
}

namespace {

struct JumpAt {
  double statistic;
  std::vector<std::pair<double, double>> neighbors;  // (gap, bound)
};

JumpAt jump_at(const JointLaw& joint, std::size_t t, const std::vector<GridDistribution>& xs,
               const std::vector<GridDistribution>& ys) {
  const double z = joint.z_grid()[t];
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < joint.size(); ++i)
    if (i != t) others.push_back(i);
  std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(joint.z_grid()[a] - z) < std::abs(joint.z_grid()[b] - z);
  });
  if (others.size() > 3) others.resize(3);
  JumpAt out{std::numeric_limits<double>::infinity(), {}};
  for (std::size_t i : others) {
    const double bound = std::max(winf_distance(xs[i], xs[t]), winf_distance(ys[i], ys[t]));
    out.neighbors.emplace_back(std::abs(joint.z_grid()[i] - z), bound);
    out.statistic = std::min(out.statistic, bound);
  }
  return out;
}

}  // namespace

TestReport jump_test(const JointLaw& joint, double K, std::optional<double> z_star) {
  if (!(K >= 0.0) || !std::isfinite(K)) throw InputError("jump threshold must be finite and >= 0");
  if (joint.size() < 2) throw DegenerateGridError("jump test needs a z-grid point with neighbors");
  std::vector<GridDistribution> xs;
  std::vector<GridDistribution> ys;
  for (const auto& c : joint.conditionals()) {
    xs.push_back(c.x_marginal());
    ys.push_back(c.y_marginal());
  }
  std::vector<std::size_t> targets;
  if (z_star) {
    const auto& g = joint.z_grid();
    const auto it = std::find(g.begin(), g.end(), *z_star);
    if (it == g.end()) throw InputError("z* = " + std::to_string(*z_star) + " is not on the z-grid");
    targets.push_back(static_cast<std::size_t>(it - g.begin()));
  } else {
    targets.resize(joint.size());
    std::iota(targets.begin(), targets.end(), std::size_t{0});
  }
  std::optional<JumpAt> best;
  std::size_t best_t = 0;
  for (std::size_t t : targets) {
    JumpAt j = jump_at(joint, t, xs, ys);
    if (!best || j.statistic > best->statistic) {
      best = std::move(j);
      best_t = t;
    }
  }
  std::vector<std::pair<std::string, double>> diag{{"z_star", joint.z_grid()[best_t]}};
  for (std::size_t k = 0; k < best->neighbors.size(); ++k) {
    diag.emplace_back("gap_" + std::to_string(k + 1), best->neighbors[k].first);
    diag.emplace_back("bound_" + std::to_string(k + 1), best->neighbors[k].second);
  }
  return TestReport::make("jump", best->statistic, K, std::move(diag));
}

TestReport monotonicity_test(const JointLaw& joint, double tol) {
  if (!(tol >= 0.0) || !std::isfinite(tol)) throw InputError("tolerance must be finite and >= 0");
  double stat = 0.0;
  std::vector<std::pair<std::string, double>> diag;
  for (std::size_t i = 0; i + 1 < joint.size(); ++i) {
    const auto& lo = joint.conditionals()[i];
    const auto& hi = joint.conditionals()[i + 1];
    const double vy = fosd_violation(lo.y_marginal(), hi.y_marginal());
    const double vx = fosd_violation(lo.x_marginal(), hi.x_marginal());
    const double v = std::max(vy, vx);
    if (v > stat) {
      stat = v;
      diag = {{"worst_z1", joint.z_grid()[i]},
              {"worst_z2", joint.z_grid()[i + 1]},
              {"coordinate", vx >= vy ? 1.0 : 0.0}};
    }
  }
  return TestReport::make("fosd", stat, tol, std::move(diag));
}

TestReport monotonicity_sure_decrease_test(const JointLaw& joint, double K) {
  if (!std::isfinite(K)) throw InputError("sure-decrease threshold must be finite");
  if (joint.size() < 2) throw DegenerateGridError("sure-decrease test needs at least 2 z-grid points");
  struct Range {
    double inf;
    double sup;
  };
  const auto range = [](const GridDistribution& d) {
    const auto s = d.support();
    return Range{s.front().lo, s.back().hi};
  };
  std::vector<std::array<Range, 2>> ranges;
  for (const auto& c : joint.conditionals())
    ranges.push_back({range(c.y_marginal()), range(c.x_marginal())});
  double stat = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::string, double>> diag;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    for (std::size_t j = i + 1; j < joint.size(); ++j) {
      for (std::size_t c = 0; c < 2; ++c) {
        const double gap = ranges[i][c].inf - ranges[j][c].sup;
        if (gap > stat) {
          stat = gap;
          diag = {{"worst_z1", joint.z_grid()[i]},
                  {"worst_z2", joint.z_grid()[j]},
                  {"coordinate", static_cast<double>(c)}};
        }
      }
    }
  }
  return TestReport::make("sure-decrease", stat, K, std::move(diag));
}

}  // namespace ivt

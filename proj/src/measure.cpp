#include "ivt/measure.hpp"

#include "ivt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ivt {

namespace {

double sum_atoms(const std::vector<Atom>& atoms) {
  double s = 0.0;
  for (const auto& a : atoms) s += a.mass;
  return s;
}

}  // namespace

GridDistribution::GridDistribution(Eigen::VectorXd edges, Eigen::VectorXd masses,
                                   std::vector<Atom> atoms)
    : edges_(std::move(edges)), masses_(std::move(masses)), atoms_(std::move(atoms)) {
  if (edges_.size() < 2) throw InputError("grid distribution needs at least two edges");
  if (masses_.size() != edges_.size() - 1)
    throw InputError("grid distribution needs one mass per bin");
  for (Eigen::Index i = 0; i < edges_.size(); ++i) {
    if (!std::isfinite(edges_(i))) throw InputError("non-finite bin edge");
    if (i > 0 && !(edges_(i) > edges_(i - 1)))
      throw InputError("bin edges must be strictly increasing");
  }
  for (Eigen::Index i = 0; i < masses_.size(); ++i) {
    if (!std::isfinite(masses_(i)) || masses_(i) < 0.0)
      throw InputError("bin masses must be finite and non-negative");
  }
  std::sort(atoms_.begin(), atoms_.end(),
            [](const Atom& a, const Atom& b) { return a.location < b.location; });
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const auto& a = atoms_[i];
    if (!std::isfinite(a.location) || !std::isfinite(a.mass) || a.mass < 0.0)
      throw InputError("atoms must have finite location and non-negative mass");
    if (a.location < lower() || a.location > upper())
      throw InputError("atom lies outside the grid");
    if (i > 0 && atoms_[i - 1].location == a.location)
      throw InputError("duplicate atom location");
  }
  const double total = masses_.sum() + sum_atoms(atoms_);
  if (std::abs(total - 1.0) > kInputTolerance)
    throw InputError("distribution mass sums to " + std::to_string(total) + ", expected 1");
  build_pieces();
}

GridDistribution GridDistribution::uniform(double lo, double hi, Eigen::Index bins) {
  if (bins < 1 || !(hi > lo)) throw InputError("uniform needs lo < hi and bins >= 1");
  Eigen::VectorXd edges = Eigen::VectorXd::LinSpaced(bins + 1, lo, hi);
  Eigen::VectorXd masses = Eigen::VectorXd::Constant(bins, 1.0 / static_cast<double>(bins));
  return {std::move(edges), std::move(masses)};
}

GridDistribution GridDistribution::point_mass(double location) {
  Eigen::VectorXd edges(2);
  edges << location - 0.5, location + 0.5;
  return {std::move(edges), Eigen::VectorXd::Zero(1), {{location, 1.0}}};
}

GridDistribution GridDistribution::discrete(const std::vector<double>& support,
                                            const std::vector<double>& weights) {
  if (support.empty() || support.size() != weights.size())
    throw InputError("discrete law needs one weight per support point");
  Eigen::VectorXd edges(2);
  edges << support.front() - 0.5, support.back() + 0.5;
  std::vector<Atom> atoms;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (i > 0 && !(support[i] > support[i - 1]))
      throw InputError("discrete support must be strictly increasing");
    atoms.push_back({support[i], weights[i]});
  }
  return {std::move(edges), Eigen::VectorXd::Zero(1), std::move(atoms)};
}

GridDistribution GridDistribution::from_weights(Eigen::VectorXd edges, Eigen::VectorXd weights) {
  const double total = weights.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw InputError("weights must have positive sum");
  return {std::move(edges), weights / total};
}

bool GridDistribution::has_atoms() const {
  return std::any_of(atoms_.begin(), atoms_.end(), [](const Atom& a) { return a.mass > 0.0; });
}

double GridDistribution::atom_mass() const { return sum_atoms(atoms_); }

Eigen::Index GridDistribution::positive_bins() const {
  return (masses_.array() > 0.0).count();
}

void GridDistribution::build_pieces() {
  pieces_.clear();
  std::size_t next_atom = 0;
  for (Eigen::Index k = 0; k < masses_.size(); ++k) {
    const double lo = edges_(k);
    const double hi = edges_(k + 1);
    const double density = masses_(k) / (hi - lo);
    double start = lo;
    while (next_atom < atoms_.size() && atoms_[next_atom].location < hi) {
      const Atom& atom = atoms_[next_atom++];
      if (atom.location > start) {
        pieces_.push_back({start, atom.location, density * (atom.location - start), false});
        start = atom.location;
      }
      pieces_.push_back({atom.location, atom.location, atom.mass, true});
    }
    if (hi > start) {
      // The last sub-segment takes the remainder so the bin total is exact.
      double used = 0.0;
      for (auto it = pieces_.rbegin(); it != pieces_.rend() && it->a >= lo; ++it)
        if (!it->atom) used += it->mass;
      const double rest = start == lo ? masses_(k) : std::max(0.0, masses_(k) - used);
      pieces_.push_back({start, hi, rest, false});
    }
  }
  while (next_atom < atoms_.size()) {
    const Atom& atom = atoms_[next_atom++];
    pieces_.push_back({atom.location, atom.location, atom.mass, true});
  }
  cum_.assign(pieces_.size() + 1, 0.0);
  for (std::size_t i = 0; i < pieces_.size(); ++i) cum_[i + 1] = cum_[i] + pieces_[i].mass;
}

double GridDistribution::cdf(double x) const {
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), x,
                             [](double v, const Piece& p) { return v < p.a; });
  if (it == pieces_.begin()) return 0.0;
  const auto i = static_cast<std::size_t>(std::distance(pieces_.begin(), it) - 1);
  const Piece& p = pieces_[i];
  double part = p.mass;
  if (!p.atom && x < p.b) part = p.mass * (x - p.a) / (p.b - p.a);
  return std::min(1.0, cum_[i] + part);
}

double GridDistribution::cdf_left(double x) const {
  auto it = std::lower_bound(pieces_.begin(), pieces_.end(), x,
                             [](const Piece& p, double v) { return p.a < v; });
  if (it == pieces_.begin()) return 0.0;
  const auto i = static_cast<std::size_t>(std::distance(pieces_.begin(), it) - 1);
  const Piece& p = pieces_[i];
  double part = p.mass;
  if (!p.atom && x < p.b) part = p.mass * (x - p.a) / (p.b - p.a);
  return std::min(1.0, cum_[i] + part);
}

std::vector<double> GridDistribution::breakpoints() const {
  std::vector<double> pts(edges_.data(), edges_.data() + edges_.size());
  for (const auto& a : atoms_) pts.push_back(a.location);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

std::vector<Interval> GridDistribution::support() const {
  std::vector<Interval> out;
  for (const auto& p : pieces_) {
    if (!(p.mass > 0.0)) continue;
    if (!out.empty() && p.a <= out.back().hi) {
      out.back().hi = std::max(out.back().hi, p.b);
    } else {
      out.push_back({p.a, p.b});
    }
  }
  return out;
}

std::optional<Eigen::Index> GridDistribution::bin_of(double x) const {
  if (x < lower() || x > upper()) return std::nullopt;
  if (x == upper()) return bins() - 1;
  const double* first = edges_.data();
  const double* last = edges_.data() + edges_.size();
  const double* it = std::upper_bound(first, last, x);
  return static_cast<Eigen::Index>(it - first - 1);
}

bool operator==(const GridDistribution& a, const GridDistribution& b) {
  return a.edges_.size() == b.edges_.size() && a.edges_ == b.edges_ && a.masses_ == b.masses_ &&
         a.atoms_ == b.atoms_;
}

double quantile(const GridDistribution& dist, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
  const auto& pieces = dist.pieces();
  std::size_t first_positive = pieces.size();
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].mass > 0.0) {
      if (first_positive == pieces.size()) first_positive = i;
      last_positive = i;
    }
  }
  if (p == 0.0) return pieces[first_positive].a;
  for (std::size_t i = first_positive; i <= last_positive; ++i) {
    const auto& piece = pieces[i];
    if (!(piece.mass > 0.0)) continue;
    const double before = dist.mass_before(i);
    if (before + piece.mass >= p) {
      if (piece.atom) return piece.a;
      const double t = std::clamp((p - before) / piece.mass, 0.0, 1.0);
      return piece.a + t * (piece.b - piece.a);
    }
  }
  return pieces[last_positive].b;
}

double quantile_right(const GridDistribution& dist, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
  const auto& pieces = dist.pieces();
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i)
    if (pieces[i].mass > 0.0) last_positive = i;
  for (std::size_t i = 0; i <= last_positive; ++i) {
    const auto& piece = pieces[i];
    if (!(piece.mass > 0.0)) continue;
    const double before = dist.mass_before(i);
    if (before + piece.mass > p) {
      if (piece.atom || p <= before) return piece.a;
      const double t = std::clamp((p - before) / piece.mass, 0.0, 1.0);
      return piece.a + t * (piece.b - piece.a);
    }
  }
  return pieces[last_positive].b;
}

MeasurableSet::MeasurableSet(std::vector<Interval> intervals) {
  std::erase_if(intervals, [](const Interval& iv) { return iv.empty(); });
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  for (const auto& iv : intervals) {
    if (!intervals_.empty() && iv.lo <= intervals_.back().hi) {
      intervals_.back().hi = std::max(intervals_.back().hi, iv.hi);
    } else {
      intervals_.push_back(iv);
    }
  }
}

bool MeasurableSet::contains(double x) const {
  return std::any_of(intervals_.begin(), intervals_.end(),
                     [x](const Interval& iv) { return iv.lo <= x && x < iv.hi; });
}

double MeasurableSet::lebesgue() const {
  double s = 0.0;
  for (const auto& iv : intervals_) s += iv.length();
  return s;
}

MeasurableSet MeasurableSet::intersect(const MeasurableSet& other) const {
  std::vector<Interval> out;
  for (const auto& a : intervals_)
    for (const auto& b : other.intervals_) {
      Interval iv{std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
      if (!iv.empty()) out.push_back(iv);
    }
  return MeasurableSet(std::move(out));
}

MeasurableSet MeasurableSet::unite(const MeasurableSet& other) const {
  std::vector<Interval> all = intervals_;
  all.insert(all.end(), other.intervals_.begin(), other.intervals_.end());
  return MeasurableSet(std::move(all));
}

double measure(const GridDistribution& dist, const MeasurableSet& set) {
  double s = 0.0;
  for (const auto& iv : set.intervals()) s += dist.measure(iv);
  return s;
}

GridDistribution refine(const GridDistribution& dist, double point) {
  const auto& e = dist.edges();
  if (!(point > dist.lower() && point < dist.upper())) return dist;
  const auto k = *dist.bin_of(point);
  if (e(k) == point) return dist;
  Eigen::VectorXd edges(e.size() + 1);
  Eigen::VectorXd masses(dist.bins() + 1);
  edges.head(k + 1) = e.head(k + 1);
  edges(k + 1) = point;
  edges.tail(e.size() - k - 1) = e.tail(e.size() - k - 1);
  masses.head(k) = dist.masses().head(k);
  const double m = dist.masses()(k);
  const double left = m * (point - e(k)) / (e(k + 1) - e(k));
  masses(k) = left;
  masses(k + 1) = m - left;
  masses.tail(dist.bins() - k - 1) = dist.masses().tail(dist.bins() - k - 1);
  return {std::move(edges), std::move(masses), dist.atoms()};
}

SplitResult split_equal_measure(const GridDistribution& dist, const MeasurableSet& set) {
  for (const auto& atom : dist.atoms()) {
    if (atom.mass > 0.0 && set.contains(atom.location))
      throw AtomicityError("an atom lies inside the set to be split");
  }
  const double total = measure(dist, set);
  if (!(total > 0.0)) throw InputError("cannot split a set of zero measure");
  const double half = 0.5 * total;

  std::vector<Interval> lower;
  std::vector<Interval> upper;
  double cum = 0.0;
  bool cut = false;
  double cut_point = 0.0;
  for (const auto& iv : set.intervals()) {
    if (cut) {
      upper.push_back(iv);
      continue;
    }
    const double m = dist.measure(iv);
    if (cum + m < half) {
      cum += m;
      lower.push_back(iv);
      continue;
    }
    const double target = dist.cdf_left(iv.lo) + (half - cum);
    double c = std::clamp(quantile(dist, std::min(1.0, target)), iv.lo, iv.hi);
    cut_point = c;
    lower.push_back({iv.lo, c});
    upper.push_back({c, iv.hi});
    cut = true;
  }
  GridDistribution refined = cut ? refine(dist, cut_point) : dist;
  return {MeasurableSet(std::move(lower)), MeasurableSet(std::move(upper)), std::move(refined)};
}

namespace {

// All x at which either CDF can change slope or jump.
std::vector<double> merged_breakpoints(const GridDistribution& a, const GridDistribution& b) {
  std::vector<double> pts = a.breakpoints();
  const auto more = b.breakpoints();
  pts.insert(pts.end(), more.begin(), more.end());
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

// Levels at which either quantile function can change slope or jump.
std::vector<double> merged_levels(const GridDistribution& a, const GridDistribution& b) {
  std::vector<double> levels{0.0, 1.0};
  for (const auto* d : {&a, &b}) {
    for (std::size_t i = 0; i <= d->pieces().size(); ++i)
      levels.push_back(std::clamp(d->mass_before(i), 0.0, 1.0));
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

double directed_hausdorff(const std::vector<Interval>& from, const std::vector<Interval>& to) {
  auto dist_to = [&](double x) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& iv : to) {
      const double d = x < iv.lo ? iv.lo - x : (x > iv.hi ? x - iv.hi : 0.0);
      best = std::min(best, d);
    }
    return best;
  };
  double worst = 0.0;
  for (const auto& iv : from) {
    std::vector<double> candidates{iv.lo, iv.hi};
    // dist_to is piecewise linear; interior maxima sit at gap midpoints of `to`.
    for (std::size_t j = 0; j + 1 < to.size(); ++j) {
      const double mid = 0.5 * (to[j].hi + to[j + 1].lo);
      if (mid > iv.lo && mid < iv.hi) candidates.push_back(mid);
    }
    for (double x : candidates) worst = std::max(worst, dist_to(x));
  }
  return worst;
}

}  // namespace

double cdf_distance_sup(const GridDistribution& a, const GridDistribution& b) {
  double worst = 0.0;
  for (double x : merged_breakpoints(a, b)) {
    worst = std::max(worst, std::abs(a.cdf(x) - b.cdf(x)));
    worst = std::max(worst, std::abs(a.cdf_left(x) - b.cdf_left(x)));
  }
  return worst;
}

double hausdorff_support_distance(const GridDistribution& a, const GridDistribution& b) {
  const auto sa = a.support();
  const auto sb = b.support();
  return std::max(directed_hausdorff(sa, sb), directed_hausdorff(sb, sa));
}

double winf_distance(const GridDistribution& a, const GridDistribution& b) {
  double worst = 0.0;
  for (double level : merged_levels(a, b)) {
    if (level > 0.0) worst = std::max(worst, std::abs(quantile(a, level) - quantile(b, level)));
    if (level < 1.0)
      worst = std::max(worst, std::abs(quantile_right(a, level) - quantile_right(b, level)));
  }
  return worst;
}

double fosd_violation(const GridDistribution& lower, const GridDistribution& upper) {
  double worst = 0.0;
  for (double x : merged_breakpoints(lower, upper)) {
    worst = std::max(worst, upper.cdf(x) - lower.cdf(x));
    worst = std::max(worst, upper.cdf_left(x) - lower.cdf_left(x));
  }
  // Gaps at the level of summation rounding are not violations.
  return worst > kInternalTolerance ? worst : 0.0;
}

bool fosd_check(const GridDistribution& lower, const GridDistribution& upper, double tol) {
  return fosd_violation(lower, upper) <= tol;
}

Eigen::VectorXd cell_weights(const GridDistribution& dist) {
  if (dist.continuous_mass() == 0.0 && !dist.atoms().empty()) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(dist.atoms().size()));
    for (std::size_t i = 0; i < dist.atoms().size(); ++i)
      w(static_cast<Eigen::Index>(i)) = dist.atoms()[i].mass;
    return w;
  }
  return dist.masses();
}

void CouplingMatrix::validate() const {
  const Eigen::VectorXd rows = cell_weights(row_marginal);
  const Eigen::VectorXd cols = cell_weights(col_marginal);
  if (plan.rows() != rows.size() || plan.cols() != cols.size())
    throw InputError("coupling plan shape does not match its marginals");
  if ((plan.array() < 0.0).any()) throw InputError("coupling plan has negative mass");
  if ((plan.rowwise().sum() - rows).cwiseAbs().maxCoeff() > kInputTolerance)
    throw InputError("coupling row sums do not match the row marginal");
  if ((plan.colwise().sum().transpose() - cols).cwiseAbs().maxCoeff() > kInputTolerance)
    throw InputError("coupling column sums do not match the column marginal");
}

}  // namespace ivt

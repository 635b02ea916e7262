#ifndef IVT_MEASURE_HPP
#define IVT_MEASURE_HPP

// Piecewise-uniform probability measures on a real grid, with optional point
// masses, plus the set/partition/distance primitives the rest of the library
// is built on.

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace ivt {

// Tolerance applied to user-supplied normalization.
inline constexpr double kInputTolerance = 1e-9;
// Tolerance for construction arithmetic (splits, pushforwards).
inline constexpr double kInternalTolerance = 1e-12;

struct Atom {
  double location = 0.0;
  double mass = 0.0;

  friend bool operator==(const Atom&, const Atom&) = default;
};

// Half-open interval [lo, hi).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool empty() const { return !(hi > lo); }

  friend bool operator==(const Interval&, const Interval&) = default;
};

// A probability measure that spreads `masses[k]` uniformly over
// [edges[k], edges[k+1]) and places point masses at `atoms`.
class GridDistribution {
 public:
  GridDistribution(Eigen::VectorXd edges, Eigen::VectorXd masses,
                   std::vector<Atom> atoms = {});

  static GridDistribution uniform(double lo, double hi, Eigen::Index bins = 1);
  static GridDistribution point_mass(double location);
  // Purely atomic law on `support` (strictly increasing) with the given weights.
  static GridDistribution discrete(const std::vector<double>& support,
                                   const std::vector<double>& weights);
  // Builds a grid law from unnormalized non-negative weights.
  static GridDistribution from_weights(Eigen::VectorXd edges, Eigen::VectorXd weights);

  const Eigen::VectorXd& edges() const { return edges_; }
  const Eigen::VectorXd& masses() const { return masses_; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  Eigen::Index bins() const { return masses_.size(); }
  double lower() const { return edges_(0); }
  double upper() const { return edges_(edges_.size() - 1); }
  bool has_atoms() const;
  double atom_mass() const;
  double continuous_mass() const { return masses_.sum(); }
  Eigen::Index positive_bins() const;

  // Right-continuous distribution function F(x) = P(X <= x).
  double cdf(double x) const;
  // Left limit F(x-) = P(X < x).
  double cdf_left(double x) const;
  // P(X in [lo, hi)).
  double measure(const Interval& iv) const { return cdf_left(iv.hi) - cdf_left(iv.lo); }

  // Bin edges and atom locations, sorted and deduplicated.
  std::vector<double> breakpoints() const;
  // Closed connected components of the support; atoms appear as [a, a].
  std::vector<Interval> support() const;
  // Index of the bin containing x (half-open, last edge belongs to last bin).
  std::optional<Eigen::Index> bin_of(double x) const;

  // Segments of constant density in x-order. An atom is a segment with a == b.
  struct Piece {
    double a;
    double b;
    double mass;
    bool atom;
  };
  const std::vector<Piece>& pieces() const { return pieces_; }
  // Cumulative mass strictly before piece i.
  double mass_before(std::size_t i) const { return cum_[i]; }

  friend bool operator==(const GridDistribution& a, const GridDistribution& b);

 private:
  void build_pieces();

  Eigen::VectorXd edges_;
  Eigen::VectorXd masses_;
  std::vector<Atom> atoms_;
  std::vector<Piece> pieces_;
  std::vector<double> cum_;
};

// Generalized inverse F^{-1}(p) = inf{x : F(x) >= p}, linear within bins.
// Throws InputError for p outside [0, 1].
double quantile(const GridDistribution& dist, double p);
// Right limit inf{x : F(x) > p}; differs from `quantile` only across gaps.
double quantile_right(const GridDistribution& dist, double p);

// Finite disjoint union of half-open intervals, kept sorted and merged.
class MeasurableSet {
 public:
  MeasurableSet() = default;
  explicit MeasurableSet(std::vector<Interval> intervals);
  static MeasurableSet of(double lo, double hi) { return MeasurableSet({{lo, hi}}); }

  const std::vector<Interval>& intervals() const { return intervals_; }
  bool empty() const { return intervals_.empty(); }
  bool contains(double x) const;
  double lebesgue() const;

  MeasurableSet intersect(const MeasurableSet& other) const;
  MeasurableSet unite(const MeasurableSet& other) const;

  friend bool operator==(const MeasurableSet&, const MeasurableSet&) = default;

 private:
  std::vector<Interval> intervals_;
};

double measure(const GridDistribution& dist, const MeasurableSet& set);

struct SplitResult {
  MeasurableSet lower;
  MeasurableSet upper;
  // `dist` with the cut point inserted as a bin edge when it fell inside a bin.
  GridDistribution refined;
};

// Splits `set` at the point where the mass of set ∩ (-inf, c) reaches half of
// the mass of `set`. Throws AtomicityError if an atom of `dist` lies in `set`
// and InputError if `set` is null under `dist`.
SplitResult split_equal_measure(const GridDistribution& dist, const MeasurableSet& set);

// Inserts `point` as an edge, splitting its bin proportionally to length.
GridDistribution refine(const GridDistribution& dist, double point);

// Kolmogorov-Smirnov distance sup_x |F_a(x) - F_b(x)|.
double cdf_distance_sup(const GridDistribution& a, const GridDistribution& b);

// Hausdorff distance between the closed positive-mass supports.
double hausdorff_support_distance(const GridDistribution& a, const GridDistribution& b);

// sup_p |Q_a(p) - Q_b(p)|: the smallest almost-sure bound on |X_a - X_b| over
// all couplings in one dimension (attained by the comonotone coupling).
double winf_distance(const GridDistribution& a, const GridDistribution& b);

// True iff F_upper(x) <= F_lower(x) + tol everywhere.
bool fosd_check(const GridDistribution& lower, const GridDistribution& upper, double tol);

// max_x (F_upper(x) - F_lower(x)); gaps up to kInternalTolerance count as zero.
double fosd_violation(const GridDistribution& lower, const GridDistribution& upper);

// Cell weights of a law: atom masses for a purely atomic law, bin masses
// otherwise.
Eigen::VectorXd cell_weights(const GridDistribution& dist);

// Transport plan between two laws; rows and columns index `cell_weights` of
// the respective marginal.
struct CouplingMatrix {
  GridDistribution row_marginal;
  GridDistribution col_marginal;
  Eigen::MatrixXd plan;

  // Throws InputError unless the plan is non-negative with the marginals'
  // cell weights as row and column sums (within kInputTolerance).
  void validate() const;
};

}  // namespace ivt

#endif  // IVT_MEASURE_HPP

#ifndef IVT_GENERATOR_HPP
#define IVT_GENERATOR_HPP

// One-to-one generators g(z, u) built by dyadic (or cyclic, when P_Z has
// atoms) permutation of equal-mass cells, and the structural model that
// composes such a generator with an outcome map.

#include "ivt/joint_law.hpp"
#include "ivt/measure.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ivt {

// The family z -> P_{X|Z=z} the generator has to reproduce, indexed through
// the bins and atoms of P_Z.
struct ConditionalFamily {
  GridDistribution pz;
  std::vector<GridDistribution> conditionals;
  std::vector<std::optional<std::size_t>> bin_conditional;
  std::vector<std::size_t> atom_conditional;

  static ConditionalFamily from_joint(const JointLaw& joint);
  // Conditional k belongs to pz bin k, then one per atom in atom order.
  static ConditionalFamily per_cell(GridDistribution pz, std::vector<GridDistribution> conditionals);
};

// A node of the z-partition tree. Addresses over {1,2} extend their parent's
// address by one symbol; atoms of P_Z are addressed "a1", "a2", ...
struct PartitionNode {
  std::string address;
  MeasurableSet z_set;
  std::optional<std::size_t> atom;
  int level = 0;
};

// A z-cell of the finished construction. Its permutation of u-cells shifts
// digit m of the cell index by shifts[m] (mod base); u-cell i is sent onto
// the quantile cell perm(i) of P_{X|Z=z}.
struct GeneratorCell {
  PartitionNode node;
  std::vector<int> shifts;
};

// Part of a z-cell on which the conditional is constant.
struct GeneratorPiece {
  std::size_t cell;
  std::size_t conditional;
  double mass;
  Interval z;  // [z, z] for an atom
  bool atom;
};

class GeneratorMap {
 public:
  GeneratorMap(ConditionalFamily family, int depth, int base, std::vector<GeneratorCell> cells,
               std::vector<PartitionNode> tree);

  int depth() const { return depth_; }
  int base() const { return base_; }
  // Number of equal-mass u-cells, base^depth.
  std::uint32_t resolution() const { return resolution_; }
  const ConditionalFamily& family() const { return family_; }
  const std::vector<GeneratorCell>& cells() const { return cells_; }
  const std::vector<GeneratorPiece>& pieces() const { return pieces_; }
  // Every node visited, breadth-first, including interior nodes.
  const std::vector<PartitionNode>& tree() const { return tree_; }

  const GridDistribution& conditional(const GeneratorPiece& p) const {
    return family_.conditionals[p.conditional];
  }
  std::uint32_t permute(std::size_t cell, std::uint32_t i) const;
  std::vector<std::uint32_t> perm(std::size_t cell) const;

  // Piece containing z. Throws InputError outside [pz.lower, pz.upper].
  std::size_t piece_of(double z) const;
  std::uint32_t u_cell(double u) const;

  // g(z, u).
  double operator()(double z, double u) const;

 private:
  ConditionalFamily family_;
  int depth_;
  int base_;
  std::uint32_t resolution_;
  std::vector<GeneratorCell> cells_;
  std::vector<GeneratorPiece> pieces_;
  std::vector<PartitionNode> tree_;
  std::vector<std::size_t> by_z_;  // non-atomic pieces sorted by z
};

// Digit-wise cyclic shift of a base-`base` index with `shifts.size()` digits,
// most significant digit first.
std::vector<std::uint32_t> shift_permutation(int base, std::span<const int> shifts);

// Half-open quantile cell [j/N, (j+1)/N) of P_U = uniform(0, 1).
Interval u_cell_interval(std::uint32_t resolution, std::uint32_t j);
// The x-set Q([j/N, (j+1)/N)) of a conditional.
Interval x_cell_interval(const GridDistribution& conditional, std::uint32_t resolution,
                         std::uint32_t j);
// Quantile cell of x under `conditional`; nullopt outside the positive support.
std::optional<std::uint32_t> x_cell_of(const GridDistribution& conditional,
                                       std::uint32_t resolution, double x);

// Breadth-first dyadic construction over a non-atomic P_Z. Every z-cell is
// split at every level; the first child swaps sibling u-cells, the second
// keeps its parent's map.
GeneratorMap build_generator(const ConditionalFamily& family, int depth);
GeneratorMap build_generator(const JointLaw& joint, int depth);

// (k+2)-ary variant for P_Z with k atoms: atom j shifts every digit by j-1,
// the two halves of each non-atomic cell shift by k and k+1. Delegates to
// build_generator when there are no atoms.
GeneratorMap build_generator_with_atoms(const ConditionalFamily& family, int depth);

// Exact mass of (z_i, z_j, u) triples, z_i and z_j iid P_Z and u uniform, with
// z_i != z_j and overlapping images g(z_i, u-cell) and g(z_j, u-cell).
// Each generator u-cell is divided into `u_refine` sub-cells.
double collision_fraction_exact(const GeneratorMap& gen, int u_refine = 1);

// Same quantity restricted to pairs from different top-level groups (the two
// halves of the non-atomic part and each atom), normalized by that pair mass.
double cross_group_collision_fraction(const GeneratorMap& gen, int u_refine = 1);

// Monte Carlo estimate over `z_pairs` sampled pairs and every u sub-cell.
double collision_fraction(const GeneratorMap& gen, std::size_t z_pairs, int u_refine,
                          std::uint64_t seed);

// Address of the unique z-cell whose map sends u's cell onto x's cell.
// Throws NonInvertibleError when zero or several cells match, or when the
// only match is the unsplit non-atomic root (depth 0).
std::string invert_generator(const GeneratorMap& gen, double x, double u);

// Realization of Y = h(X, (U, V')), X = g(Z, U) with (U, V') uniform on the
// unit square and independent of Z.
class StructuralModel {
 public:
  StructuralModel(JointLaw joint, GeneratorMap generator);

  const JointLaw& joint() const { return joint_; }
  const GeneratorMap& generator() const { return generator_; }
  const GridDistribution& u_law() const { return u_law_; }
  const GridDistribution& v_law() const { return v_law_; }
  bool independent() const { return true; }

  // h'(x, z, v'): quantile transform of P(Y | X = x, Z = z).
  double outcome(double x, double z, double v) const;
  // h(x, u, v') = h'(x, g^{-1}(x, u), v').
  double outcome_via_inverse(double x, double u, double v) const;
  // (y, x) for a given instrument value and latent draw.
  std::pair<double, double> draw(double z, double u, double v) const;

  // P(Y in y-bin | X in x-bin j) for conditional c.
  const GridDistribution& outcome_law(std::size_t c, Eigen::Index j) const;

 private:
  JointLaw joint_;
  GeneratorMap generator_;
  GridDistribution u_law_;
  GridDistribution v_law_;
  std::vector<std::vector<std::optional<GridDistribution>>> outcome_laws_;
};

// Composes the generator with the outcome maps of `joint`. Throws
// MarginalMismatch when the generator was built for other conditionals.
StructuralModel compose_structural_model(const JointLaw& joint, const GeneratorMap& gen);

// Conditional law on piece `p` of the model, computed by pushing the product
// of the u-cells and the outcome quantile maps forward.
GridMeasure2D induced_conditional(const StructuralModel& model, const GeneratorPiece& p);

// Cell-resolution representation of a conditional: its own quantile cells
// pushed through the identity permutation.
GridMeasure2D cell_representation(const GridMeasure2D& conditional, std::uint32_t resolution);

// Max over z of the total variation between the model-induced P_{Y,X|Z=z}
// and `joint`'s conditional, both at cell resolution.
double verify_replication(const StructuralModel& model, const JointLaw& joint);

// Same as verify_replication but against the raw masses of `joint`.
double verify_replication_raw(const StructuralModel& model, const JointLaw& joint);

// The full law P_{Y,X|Z} induced by the model on `model.joint()`'s grids.
JointLaw induced_law(const StructuralModel& model);

}  // namespace ivt

#endif  // IVT_GENERATOR_HPP

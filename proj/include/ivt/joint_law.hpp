#ifndef IVT_JOINT_LAW_HPP
#define IVT_JOINT_LAW_HPP

#include "ivt/measure.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <vector>

namespace ivt {

// A 2-D grid measure over (Y, X). mass(i, j) is the probability of
// y-bin i and x-bin j, spread uniformly over the cell.
struct GridMeasure2D {
  Eigen::VectorXd y_edges;
  Eigen::VectorXd x_edges;
  Eigen::MatrixXd mass;

  void validate() const;
  GridDistribution x_marginal() const;
  GridDistribution y_marginal() const;
  // P(Y | X in x-bin j); requires positive column mass.
  GridDistribution y_given_x(Eigen::Index j) const;

  friend bool operator==(const GridMeasure2D& a, const GridMeasure2D& b);
};

double total_variation(const GridMeasure2D& a, const GridMeasure2D& b);

// The observed law P_{Y,X|Z} on a z-grid, together with P_Z.
//
// Every z-grid entry either coincides with an atom of `pz` or lies inside a
// positive-mass bin of `pz`; each atom and each positive-mass bin is covered
// by exactly one entry. Conditional i belongs to z-grid entry i.
class JointLaw {
 public:
  JointLaw(std::vector<double> z_grid, GridDistribution pz,
           std::vector<GridMeasure2D> conditionals);

  const std::vector<double>& z_grid() const { return z_grid_; }
  const GridDistribution& pz() const { return pz_; }
  const std::vector<GridMeasure2D>& conditionals() const { return conditionals_; }
  std::size_t size() const { return z_grid_.size(); }

  // Conditional index attached to pz bin k (nullopt for zero-mass bins).
  std::optional<std::size_t> conditional_of_bin(Eigen::Index k) const {
    return bin_conditional_[static_cast<std::size_t>(k)];
  }
  // Conditional index attached to the a-th atom of pz.
  std::size_t conditional_of_atom(std::size_t a) const { return atom_conditional_[a]; }
  bool is_atom_entry(std::size_t i) const { return entry_is_atom_[i]; }
  // pz mass carried by z-grid entry i.
  double entry_mass(std::size_t i) const;

  std::vector<GridDistribution> x_marginals() const;

  friend bool operator==(const JointLaw& a, const JointLaw& b);

 private:
  std::vector<double> z_grid_;
  GridDistribution pz_;
  std::vector<GridMeasure2D> conditionals_;
  std::vector<std::optional<std::size_t>> bin_conditional_;
  std::vector<std::size_t> atom_conditional_;
  std::vector<bool> entry_is_atom_;
};

}  // namespace ivt

#endif  // IVT_JOINT_LAW_HPP

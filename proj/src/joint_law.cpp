#include "ivt/joint_law.hpp"

#include "ivt/errors.hpp"

#include <cmath>
#include <string>

namespace ivt {

void GridMeasure2D::validate() const {
  if (mass.rows() != y_edges.size() - 1 || mass.cols() != x_edges.size() - 1)
    throw InputError("conditional mass matrix does not match its edges");
  if (!mass.allFinite() || (mass.array() < 0.0).any())
    throw InputError("conditional masses must be finite and non-negative");
  if (std::abs(mass.sum() - 1.0) > kInputTolerance)
    throw InputError("conditional mass sums to " + std::to_string(mass.sum()) + ", expected 1");
  // Edge monotonicity is checked by the marginal constructors.
  (void)x_marginal();
  (void)y_marginal();
}

GridDistribution GridMeasure2D::x_marginal() const {
  return {x_edges, mass.colwise().sum().transpose()};
}

GridDistribution GridMeasure2D::y_marginal() const { return {y_edges, mass.rowwise().sum()}; }

GridDistribution GridMeasure2D::y_given_x(Eigen::Index j) const {
  const double col = mass.col(j).sum();
  if (!(col > 0.0)) throw InputError("conditioning on an x-bin of zero mass");
  return {y_edges, mass.col(j) / col};
}

bool operator==(const GridMeasure2D& a, const GridMeasure2D& b) {
  return a.y_edges.size() == b.y_edges.size() && a.x_edges.size() == b.x_edges.size() &&
         a.mass.rows() == b.mass.rows() && a.mass.cols() == b.mass.cols() &&
         a.y_edges == b.y_edges && a.x_edges == b.x_edges && a.mass == b.mass;
}

double total_variation(const GridMeasure2D& a, const GridMeasure2D& b) {
  if (a.y_edges.size() != b.y_edges.size() || a.x_edges.size() != b.x_edges.size() ||
      a.y_edges != b.y_edges || a.x_edges != b.x_edges)
    throw InputError("total variation needs matching grids");
  return 0.5 * (a.mass - b.mass).cwiseAbs().sum();
}

JointLaw::JointLaw(std::vector<double> z_grid, GridDistribution pz,
                   std::vector<GridMeasure2D> conditionals)
    : z_grid_(std::move(z_grid)), pz_(std::move(pz)), conditionals_(std::move(conditionals)) {
  if (z_grid_.empty()) throw InputError("joint law needs a non-empty z-grid");
  if (z_grid_.size() != conditionals_.size())
    throw InputError("joint law needs one conditional per z-grid entry");
  for (std::size_t i = 1; i < z_grid_.size(); ++i)
    if (!(z_grid_[i] > z_grid_[i - 1])) throw InputError("z-grid must be strictly increasing");
  for (const auto& c : conditionals_) c.validate();

  bin_conditional_.assign(static_cast<std::size_t>(pz_.bins()), std::nullopt);
  atom_conditional_.assign(pz_.atoms().size(), z_grid_.size());
  entry_is_atom_.assign(z_grid_.size(), false);
  for (std::size_t i = 0; i < z_grid_.size(); ++i) {
    const double z = z_grid_[i];
    bool matched = false;
    for (std::size_t a = 0; a < pz_.atoms().size(); ++a) {
      if (pz_.atoms()[a].location == z) {
        if (atom_conditional_[a] != z_grid_.size())
          throw InputError("two z-grid entries claim the same atom");
        atom_conditional_[a] = i;
        entry_is_atom_[i] = true;
        matched = true;
      }
    }
    if (matched) continue;
    const auto k = pz_.bin_of(z);
    if (!k || !(pz_.masses()(*k) > 0.0))
      throw InputError("z-grid entry " + std::to_string(z) +
                       " is neither an atom nor inside a positive-mass bin of pz");
    auto& slot = bin_conditional_[static_cast<std::size_t>(*k)];
    if (slot) throw InputError("two z-grid entries fall in the same pz bin");
    slot = i;
  }
  for (std::size_t a = 0; a < pz_.atoms().size(); ++a)
    if (pz_.atoms()[a].mass > 0.0 && atom_conditional_[a] == z_grid_.size())
      throw InputError("an atom of pz has no z-grid entry");
  for (Eigen::Index k = 0; k < pz_.bins(); ++k)
    if (pz_.masses()(k) > 0.0 && !bin_conditional_[static_cast<std::size_t>(k)])
      throw InputError("a positive-mass bin of pz has no z-grid entry");
}

double JointLaw::entry_mass(std::size_t i) const {
  for (std::size_t a = 0; a < atom_conditional_.size(); ++a)
    if (atom_conditional_[a] == i) return pz_.atoms()[a].mass;
  for (std::size_t k = 0; k < bin_conditional_.size(); ++k)
    if (bin_conditional_[k] == i) return pz_.masses()(static_cast<Eigen::Index>(k));
  return 0.0;
}

std::vector<GridDistribution> JointLaw::x_marginals() const {
  std::vector<GridDistribution> out;
  out.reserve(conditionals_.size());
  for (const auto& c : conditionals_) out.push_back(c.x_marginal());
  return out;
}

bool operator==(const JointLaw& a, const JointLaw& b) {
  return a.z_grid_ == b.z_grid_ && a.pz_ == b.pz_ && a.conditionals_ == b.conditionals_;
}

}  // namespace ivt

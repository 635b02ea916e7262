#ifndef IVT_VALIDITY_HPP
#define IVT_VALIDITY_HPP

// Testable implications of instrument validity: discrete generator
// feasibility, the instrumental inequality, continuity (moment and jump)
// tests and monotonicity tests.

#include "ivt/joint_law.hpp"
#include "ivt/measure.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ivt {

enum class Decision { consistent, reject };

std::string to_string(Decision d);

struct TestReport {
  std::string test;
  double statistic = 0.0;
  double threshold = 0.0;
  Decision decision = Decision::consistent;
  std::vector<std::pair<std::string, double>> diagnostics;

  // Decision is reject iff statistic > threshold.
  static TestReport make(std::string test, double statistic, double threshold,
                         std::vector<std::pair<std::string, double>> diagnostics = {});
  std::optional<double> diagnostic(const std::string& name) const;
};

// Hölder-type smoothness constants of the counterfactual processes, the
// moment bound C and the jump threshold K.
struct ContinuityParams {
  double alpha = 2.0;
  double beta = 1.0;
  double gamma = 4.0;
  double delta = 3.0;
  int d = 1;
  double ky = 1.0;
  double kx = 1.0;
  double jump_threshold = 1.0;
  double c_bound = 2.0;

  // C = 2 max(K_y K_x^{beta/alpha}, K_y K_x).
  static double proof_constant(double alpha, double beta, double ky, double kx);
  static ContinuityParams with_proof_constant(double alpha, double beta, double gamma,
                                              double delta, double ky = 1.0, double kx = 1.0,
                                              double jump_threshold = 1.0);
  void validate() const;
  // Moment exponent on the process increment and power of the z-gap.
  std::pair<double, double> exponents() const;
};

// Finitely many instrument values, each with a law over a shared finite
// support of treatment values.
struct DiscreteFamily {
  std::vector<double> support;
  Eigen::VectorXd pz;
  std::vector<Eigen::VectorXd> conditionals;

  void validate() const;
};

struct FeasibilityResult {
  bool feasible = false;
  // Sum over z of P(X = x | Z = z), maximized over x.
  double max_load = 0.0;
  // Certificate: the support index with the largest load and its excess over 1.
  std::size_t x_index = 0;
  double excess = 0.0;
  // Witness: weighted tuples of pairwise-distinct support indices, one
  // coordinate per instrument value.
  std::vector<std::pair<std::vector<std::size_t>, double>> tuples;
  // For two instrument values, the same witness as a coupling matrix.
  std::optional<CouplingMatrix> coupling;
};

// Largest support size and number of instrument values accepted for the
// tuple construction.
inline constexpr std::size_t kMaxDiscreteSupport = 6;
inline constexpr std::size_t kMaxDiscreteInstruments = 4;

FeasibilityResult discrete_generator_feasible(const DiscreteFamily& family);

// min over couplings of P(X_1 = X_2) = sum_x max(0, p(x) + q(x) - 1).
double minimal_collision_mass(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// P(Y = y, X = x | Z = z) for finite Y, X, Z: one (y, x) matrix per z.
struct DiscreteJoint {
  std::vector<Eigen::MatrixXd> conditionals;

  void validate() const;
};

// Statistic max_x sum_y max_z P(y, x | z) against threshold 1.
TestReport instrumental_inequality(const DiscreteJoint& joint);

// E over the comonotone coupling of |[Y,X]_{z1} - [Y,X]_{z2}|^p.
double comonotone_moment(const GridMeasure2D& a, const GridMeasure2D& b, double p);

TestReport continuity_moment_statistic(const JointLaw& joint, const ContinuityParams& params);

// With no z_star every grid point is tried and the largest statistic kept.
TestReport jump_test(const JointLaw& joint, double K, std::optional<double> z_star = std::nullopt);

TestReport monotonicity_test(const JointLaw& joint, double tol);

TestReport monotonicity_sure_decrease_test(const JointLaw& joint, double K);

}  // namespace ivt

#endif  // IVT_VALIDITY_HPP

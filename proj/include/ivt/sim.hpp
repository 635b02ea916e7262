#ifndef IVT_SIM_HPP
#define IVT_SIM_HPP

// Data-generating processes, sampling, discretization and the Monte Carlo
// size/power experiments.

#include "ivt/generator.hpp"
#include "ivt/joint_law.hpp"
#include "ivt/measure.hpp"
#include "ivt/validity.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ivt {

enum class FirstStage { location_shift, scale_shift, support_jump, sign_flip, custom };
enum class OutcomeKind { location, jump, custom };

// A law per cell of a piecewise-constant table indexed by a scalar.
struct LawTable {
  Eigen::VectorXd edges;
  std::vector<GridDistribution> laws;

  void validate() const;
  const GridDistribution& at(double key) const;
};

// First stage, with coefficients a, b, s:
//   location_shift  x = a z + b u
//   scale_shift     x = a z + (b + s z) u
//   support_jump    x = a z + b u + jump [z >= z_star]
//   sign_flip       x = -a z + b u
//   custom          x = quantile(first_table.at(z), F_U(u))
// Outcome, with coefficients c, e:
//   location        y = c x + e v
//   jump            y = c x + e v + y_jump [x >= x_star]
//   custom          y = quantile(outcome_table.at(x), F_V(v))
// Instrument: z = (1 - w) z0 + w quantile(z_law, F(source)) with z0 drawn
// from z_law independently of (u, v) and source one of u, v.
struct DGPSpec {
  std::string name = "location";
  FirstStage first_stage = FirstStage::location_shift;
  double a = 1.0;
  double b = 1.0;
  double s = 0.0;
  double z_star = 0.5;
  double jump = 3.0;
  std::optional<LawTable> first_table;

  OutcomeKind outcome = OutcomeKind::location;
  double c = 1.0;
  double e = 1.0;
  double x_star = 1.0;
  double y_jump = 3.0;
  std::optional<LawTable> outcome_table;

  GridDistribution u_law = GridDistribution::uniform(0.0, 1.0);
  GridDistribution v_law = GridDistribution::uniform(0.0, 1.0);
  GridDistribution z_law = GridDistribution::uniform(0.0, 1.0);
  bool instrument_valid = true;
  double copula_weight = 0.0;
  std::string copula_source = "u";

  void validate() const;
  double first_stage_value(double z, double u) const;
  double outcome_value(double x, double v) const;
};

struct Dataset {
  std::vector<std::array<double, 3>> rows;  // (y, x, z)
  std::uint64_t seed = 0;
  std::string spec_name;

  void validate() const;
};

Dataset sample(const DGPSpec& spec, std::size_t n, std::uint64_t seed);

// (y, x, z) draws from a structural model; (u, v') come from a stream that
// never reads z.
Dataset sample_model(const StructuralModel& model, std::size_t n, std::uint64_t seed);

// Equal-width bins over the data range of each coordinate. The z-grid holds
// the z-bin midpoints; pz is the empirical z-bin law. Throws InputError on an
// empty z-bin.
JointLaw discretize(const Dataset& data, int y_bins, int x_bins, int z_bins);

enum class TestKind { moment, jump, fosd, sure_decrease };

std::string to_string(TestKind t);
TestKind parse_test_kind(const std::string& name);

struct TestSettings {
  ContinuityParams continuity;
  double K = 1.0;
  double tol = 0.0;
  std::optional<double> z_star;
};

TestReport run_test(TestKind kind, const JointLaw& joint, const TestSettings& settings);

struct ExperimentRow {
  std::string spec;
  std::string test;
  double rejection_rate = 0.0;
  std::size_t reps = 0;
  std::size_t rejections = 0;
  double mean_statistic = 0.0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;

  const ExperimentRow* find(const std::string& spec, const std::string& test) const;
};

// Suffix of the rows holding the replica laws in the unrestricted mode.
inline constexpr const char* kReplicaSuffix = "~replica";

struct ExperimentOptions {
  std::size_t n = 10000;
  std::size_t reps = 200;
  std::uint64_t seed = 7;
  std::array<int, 3> bins{8, 8, 8};  // y, x, z
  TestSettings settings;
  // Also pass every law through nontestability_demo and test the law induced
  // by the replicating valid-instrument model, reported as "<spec>~replica".
  bool unrestricted = false;
  int depth = 6;
  unsigned threads = 0;  // 0: hardware concurrency
};

ExperimentResult run_experiment(const std::vector<DGPSpec>& specs,
                                const std::vector<TestKind>& tests,
                                const ExperimentOptions& options);

struct DemoResult {
  StructuralModel model;
  double replication_error;
};

// Valid-instrument model replicating `joint`, and its replication error.
// Throws AtomicityError unless every x-marginal has at least two positive
// bins and no atoms.
DemoResult nontestability_demo(const JointLaw& joint, int depth);

// Discrete counterpart: the distinct-tuple witness, or FeasibilityRefusal
// carrying the violating support point and its excess.
FeasibilityResult nontestability_demo(const DiscreteFamily& family);

// Valid monotone, confounded monotone, valid reversed-noise and confounded
// reversed-noise specs.
std::vector<DGPSpec> default_suite();

DGPSpec sign_flip_spec();

}  // namespace ivt

#endif  // IVT_SIM_HPP

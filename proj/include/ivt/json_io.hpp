#ifndef IVT_JSON_IO_HPP
#define IVT_JSON_IO_HPP

// JSON and CSV formats. Field order is fixed and doubles are written at
// round-trip precision.

#include "ivt/generator.hpp"
#include "ivt/joint_law.hpp"
#include "ivt/measure.hpp"
#include "ivt/sim.hpp"
#include "ivt/validity.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>

namespace ivt {

using Json = nlohmann::ordered_json;

Json to_json(const GridDistribution& d);
Json to_json(const GridMeasure2D& m);
Json to_json(const JointLaw& j);
Json to_json(const GeneratorMap& g);
// The model with its law, generator, independence flag and replication error.
Json to_json(const StructuralModel& m, double replication_error);
Json to_json(const TestReport& r);
Json to_json(const FeasibilityResult& r);
Json to_json(const DiscreteFamily& f);
Json to_json(const DiscreteJoint& j);
Json to_json(const LawTable& t);
Json to_json(const DGPSpec& s);
Json to_json(const ExperimentResult& r);

// Parsers throw InputError on malformed or invalid input.
GridDistribution grid_distribution_from_json(const Json& j);
GridMeasure2D grid_measure_from_json(const Json& j);
JointLaw joint_law_from_json(const Json& j);
// Rebuilds the generator for `joint` and checks the stored permutations.
GeneratorMap generator_from_json(const Json& j, const JointLaw& joint);
TestReport test_report_from_json(const Json& j);
DiscreteFamily discrete_family_from_json(const Json& j);
DiscreteJoint discrete_joint_from_json(const Json& j);
DGPSpec dgp_spec_from_json(const Json& j);
// Accepts a single spec, an array of specs or {"specs": [...]}.
std::vector<DGPSpec> dgp_specs_from_json(const Json& j);
ExperimentResult experiment_result_from_json(const Json& j);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Shortest representation that reads back to the same double.
std::string format_double(double v);

// "y,x,z" header then one row per observation.
std::string dataset_to_csv(const Dataset& d);
Dataset dataset_from_csv(const std::string& text, std::string spec_name = "data");

// test,statistic,threshold,decision
std::string reports_to_csv(const std::vector<TestReport>& reports);
// spec,test,rejection_rate,reps,mean_statistic
std::string experiment_to_csv(const ExperimentResult& r);

}  // namespace ivt

#endif  // IVT_JSON_IO_HPP

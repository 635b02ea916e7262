#include "ivt/cli.hpp"

#include "ivt/errors.hpp"
#include "ivt/json_io.hpp"
#include "ivt/sim.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace ivt {

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const FeasibilityRefusal& e) {
    err << "refused: " << e.what() << "\n";
    return kExitRefusal;
  } catch (const DomainRefusal& e) {
    err << "refused: " << e.what() << "\n";
    return kExitRefusal;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

void emit(const CliConfig& c, const std::string& text, std::ostream& out) {
  if (c.output.empty())
    out << text;
  else
    write_text_file(c.output, text);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void require_input(const CliConfig& c) {
  if (c.input.empty()) throw InputError(c.command + " needs --input");
}

std::string format_of(const CliConfig& c, const std::string& fallback) {
  const std::string f = c.format.empty() ? fallback : c.format;
  if (f != "json" && f != "csv") throw InputError("format must be json or csv");
  return f;
}

// {"conditionals": [[p...], ...]}: one law per instrument value.
bool is_discrete_family(const Json& j) {
  if (!j.is_object() || j.contains("z_grid") || !j.contains("conditionals")) return false;
  const Json& c = j.at("conditionals");
  return c.is_array() && !c.empty() && c[0].is_array() && !c[0].empty() && c[0][0].is_number();
}

// {"conditionals": [[[P(y, x | z)]], ...]}.
bool is_discrete_joint(const Json& j) {
  if (!j.is_object() || j.contains("z_grid") || !j.contains("conditionals")) return false;
  const Json& c = j.at("conditionals");
  return c.is_array() && !c.empty() && c[0].is_array() && !c[0].empty() && c[0][0].is_array();
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace

int cmd_replicate(const CliConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_input(c);
    const Json in = read_json_file(c.input);
    if (is_discrete_family(in)) {
      const FeasibilityResult r = nontestability_demo(discrete_family_from_json(in));
      emit(c, dump(to_json(r)), out);
      return kExitOk;
    }
    const JointLaw joint = joint_law_from_json(in);
    const DemoResult demo = nontestability_demo(joint, c.depth);
    const Json model = to_json(demo.model, demo.replication_error);
    if (c.output.empty()) {
      out << dump(model);
    } else {
      write_text_file(c.output, dump(model));
      out << dump(Json{{"replication_error", demo.replication_error}, {"depth", c.depth}});
    }
    return kExitOk;
  });
}

int cmd_feasibility(const CliConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_input(c);
    const Json in = read_json_file(c.input);
    if (is_discrete_joint(in)) {
      const TestReport r = instrumental_inequality(discrete_joint_from_json(in));
      emit(c, format_of(c, "json") == "csv" ? reports_to_csv({r}) : dump(to_json(r)), out);
      return kExitOk;
    }
    const DiscreteFamily family = discrete_family_from_json(in);
    const FeasibilityResult f = discrete_generator_feasible(family);
    std::vector<std::pair<std::string, double>> diag{
        {"excess", f.excess},
        {"x_index", static_cast<double>(f.x_index)},
        {"x_value", family.support[f.x_index]}};
    if (family.conditionals.size() == 2)
      diag.emplace_back("minimal_collision_mass",
                        minimal_collision_mass(family.conditionals[0], family.conditionals[1]));
    // Loads within the internal tolerance of one are feasible.
    const TestReport r =
        TestReport::make("feasibility", f.max_load, 1.0 + kInternalTolerance, std::move(diag));
    if (format_of(c, "json") == "csv") {
      emit(c, reports_to_csv({r}), out);
      return kExitOk;
    }
    Json j = to_json(r);
    const Json w = to_json(f);
    j["status"] = w.at("status");
    j["tuples"] = w.at("tuples");
    j["coupling"] = w.at("coupling");
    emit(c, dump(j), out);
    return kExitOk;
  });
}

int cmd_test(const CliConfig& c, std::ostream& out, std::ostream& err) {
  for (const auto& t : c.tests)
    if (t == "pearl" || t == "feasibility") {
      if (c.tests.size() != 1)
        return guarded(err, [&]() -> int {
          throw InputError("pearl and feasibility cannot be combined with other tests");
        });
      return cmd_feasibility(c, out, err);
    }
  return guarded(err, [&] {
    require_input(c);
    std::optional<JointLaw> joint;
    if (ends_with(c.input, ".csv")) {
      joint = discretize(dataset_from_csv(read_text(c.input), c.input), c.bins[0], c.bins[1],
                         c.bins[2]);
    } else {
      joint = joint_law_from_json(read_json_file(c.input));
    }
    TestSettings settings{c.params, c.K, c.tol, c.z_star};
    std::vector<TestReport> reports;
    if (c.tests.empty()) {
      for (auto t : {TestKind::moment, TestKind::jump, TestKind::fosd, TestKind::sure_decrease}) {
        try {
          reports.push_back(run_test(t, *joint, settings));
        } catch (const DegenerateGridError& e) {
          err << "skipped " << to_string(t) << ": " << e.what() << "\n";
        }
      }
    } else {
      for (const auto& name : c.tests) reports.push_back(run_test(parse_test_kind(name), *joint, settings));
    }
    if (format_of(c, "json") == "csv") {
      emit(c, reports_to_csv(reports), out);
    } else {
      Json arr = Json::array();
      for (const auto& r : reports) arr.push_back(to_json(r));
      emit(c, dump(arr), out);
    }
    return kExitOk;
  });
}

int cmd_simulate(const CliConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::vector<DGPSpec> specs =
        c.input.empty() ? default_suite() : dgp_specs_from_json(read_json_file(c.input));
    std::vector<TestKind> tests;
    for (const auto& name : c.tests) tests.push_back(parse_test_kind(name));
    if (c.tests.empty())
      tests = {TestKind::moment, TestKind::jump, TestKind::fosd, TestKind::sure_decrease};
    ExperimentOptions o;
    o.n = c.n;
    o.reps = c.reps;
    o.seed = c.seed;
    o.bins = c.bins;
    o.settings = TestSettings{c.params, c.K, c.tol, c.z_star};
    o.unrestricted = c.unrestricted;
    o.depth = c.depth;
    o.threads = c.threads;
    const ExperimentResult r = run_experiment(specs, tests, o);
    emit(c, format_of(c, "csv") == "csv" ? experiment_to_csv(r) : dump(to_json(r)), out);
    return kExitOk;
  });
}

namespace {

std::array<int, 3> parse_bins(const std::string& text) {
  std::array<int, 3> bins{};
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (std::size_t k = 0; k < 3; ++k) {
    const auto res = std::from_chars(p, end, bins[k]);
    if (res.ec != std::errc{} || bins[k] < 1) throw InputError("--bins expects Y,X,Z positive integers");
    p = res.ptr;
    if (k < 2) {
      if (p == end || *p != ',') throw InputError("--bins expects Y,X,Z positive integers");
      ++p;
    }
  }
  if (p != end) throw InputError("--bins expects Y,X,Z positive integers");
  return bins;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Instrument validity toolkit: replication of observed laws by valid-instrument "
               "models, and testable implications of validity."};
  app.require_subcommand(1);
  CliConfig c;
  std::string bins = "8,8,8";
  std::optional<double> c_bound;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--input", c.input, "Input file (JSON, or CSV dataset for test)");
    sub->add_option("--output", c.output, "Output file (default: stdout)");
    sub->add_option("--depth", c.depth, "Generator depth")->capture_default_str();
    sub->add_option("--bins", bins, "Y,X,Z bin counts for discretization")->capture_default_str();
    sub->add_option("--n", c.n, "Sample size per replication")->capture_default_str();
    sub->add_option("--reps", c.reps, "Replications")->capture_default_str();
    sub->add_option("--seed", c.seed, "Master seed (IVT_SEED overrides)")->capture_default_str();
    sub->add_option("--test", c.tests, "moment, jump, fosd, sure-decrease, pearl, feasibility")
        ->delimiter(',');
    sub->add_option("--K", c.K, "Jump / sure-decrease threshold")->capture_default_str();
    sub->add_option("--tol", c.tol, "Monotonicity tolerance")->capture_default_str();
    sub->add_option("--alpha", c.params.alpha)->capture_default_str();
    sub->add_option("--beta", c.params.beta)->capture_default_str();
    sub->add_option("--gamma", c.params.gamma)->capture_default_str();
    sub->add_option("--delta", c.params.delta)->capture_default_str();
    sub->add_option("--ky", c.params.ky)->capture_default_str();
    sub->add_option("--kx", c.params.kx)->capture_default_str();
    sub->add_option("--C", c_bound, "Moment bound (default 2 max(ky kx^(beta/alpha), ky kx))");
    sub->add_option("--z-star", c.z_star, "Jump test point (default: scan the grid)");
    sub->add_option("--format", c.format, "json or csv");
    sub->add_flag("--unrestricted", c.unrestricted,
                  "simulate: also test the law of the replicating valid-instrument model");
    sub->add_option("--threads", c.threads, "Worker threads (0: all cores)");
  };
  common(app.add_subcommand("replicate", "Build a valid-instrument model replicating a JointLaw"));
  common(app.add_subcommand("feasibility", "Discrete one-to-one generator feasibility / Pearl test"));
  common(app.add_subcommand("test", "Run validity tests on a JointLaw or CSV dataset"));
  common(app.add_subcommand("simulate", "Monte Carlo size/power experiment"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  return guarded(err, [&] {
    c.command = app.get_subcommands().front()->get_name();
    c.bins = parse_bins(bins);
    if (const char* env = std::getenv("IVT_SEED"); env != nullptr && *env != '\0') {
      const std::string s(env);
      std::uint64_t v = 0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw InputError("IVT_SEED must be an unsigned integer");
      c.seed = v;
    }
    c.params.jump_threshold = c.K > 0.0 ? c.K : c.params.jump_threshold;
    c.params.c_bound = c_bound ? *c_bound
                               : ContinuityParams::proof_constant(c.params.alpha, c.params.beta,
                                                                  c.params.ky, c.params.kx);
    c.params.validate();
    if (c.command == "replicate") return cmd_replicate(c, out, err);
    if (c.command == "feasibility") return cmd_feasibility(c, out, err);
    if (c.command == "test") return cmd_test(c, out, err);
    return cmd_simulate(c, out, err);
  });
}

}  // namespace ivt

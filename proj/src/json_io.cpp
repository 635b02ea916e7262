#include "ivt/json_io.hpp"

#include "ivt/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ivt {

namespace {

const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name))
    throw InputError(std::string("missing field \"") + name + "\"");
  return j.at(name);
}

double number(const Json& j, const char* what) {
  if (!j.is_number()) throw InputError(std::string(what) + " must be a number");
  return j.get<double>();
}

Eigen::VectorXd vector_from(const Json& j, const char* what) {
  if (!j.is_array()) throw InputError(std::string(what) + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], what);
  return v;
}

std::vector<double> std_vector_from(const Json& j, const char* what) {
  const Eigen::VectorXd v = vector_from(j, what);
  return {v.data(), v.data() + v.size()};
}

Eigen::MatrixXd matrix_from(const Json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw InputError(std::string(what) + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw InputError(std::string(what) + " rows must have equal length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

Json array_of(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json array_of(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

// Runs a parser, turning library exceptions into InputError.
template <typename F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed JSON: ") + e.what());
  }
}

std::string first_stage_name(FirstStage k) {
  switch (k) {
    case FirstStage::location_shift:
      return "location-shift";
    case FirstStage::scale_shift:
      return "scale-shift";
    case FirstStage::support_jump:
      return "support-jump";
    case FirstStage::sign_flip:
      return "sign-flip";
    case FirstStage::custom:
      return "custom";
  }
  return "";
}

FirstStage first_stage_kind(const std::string& s) {
  for (auto k : {FirstStage::location_shift, FirstStage::scale_shift, FirstStage::support_jump,
                 FirstStage::sign_flip, FirstStage::custom})
    if (first_stage_name(k) == s) return k;
  throw InputError("unknown first-stage kind '" + s + "'");
}

std::string outcome_name(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::location:
      return "location";
    case OutcomeKind::jump:
      return "jump";
    case OutcomeKind::custom:
      return "custom";
  }
  return "";
}

OutcomeKind outcome_kind(const std::string& s) {
  for (auto k : {OutcomeKind::location, OutcomeKind::jump, OutcomeKind::custom})
    if (outcome_name(k) == s) return k;
  throw InputError("unknown outcome kind '" + s + "'");
}

LawTable law_table_from_json(const Json& j) {
  LawTable t{vector_from(field(j, "edges"), "table edges"), {}};
  const Json& laws = field(j, "laws");
  if (!laws.is_array()) throw InputError("table laws must be an array");
  for (const auto& l : laws) t.laws.push_back(grid_distribution_from_json(l));
  t.validate();
  return t;
}

void read_number(const Json& j, const char* name, double& out) {
  if (j.contains(name)) out = number(j.at(name), name);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

Json to_json(const GridDistribution& d) {
  Json atoms = Json::array();
  for (const auto& a : d.atoms()) atoms.push_back(Json::array({a.location, a.mass}));
  return Json{{"edges", array_of(d.edges())}, {"masses", array_of(d.masses())}, {"atoms", atoms}};
}

Json to_json(const GridMeasure2D& m) {
  return Json{{"y_edges", array_of(m.y_edges)},
              {"x_edges", array_of(m.x_edges)},
              {"mass", array_of(m.mass)}};
}

Json to_json(const JointLaw& j) {
  Json conds = Json::array();
  for (const auto& c : j.conditionals()) conds.push_back(to_json(c));
  return Json{{"z_grid", j.z_grid()}, {"pz", to_json(j.pz())}, {"conditionals", conds}};
}

Json to_json(const GeneratorMap& g) {
  Json cells = Json::array();
  for (std::size_t c = 0; c < g.cells().size(); ++c)
    cells.push_back(Json{{"z_addr", g.cells()[c].node.address}, {"perm", g.perm(c)}});
  return Json{{"depth", g.depth()}, {"cells", cells}};
}

Json to_json(const StructuralModel& m, double replication_error) {
  return Json{{"joint", to_json(m.joint())},
              {"generator", to_json(m.generator())},
              {"independent", m.independent()},
              {"replication_error", replication_error}};
}

Json to_json(const TestReport& r) {
  Json diag = Json::object();
  for (const auto& [k, v] : r.diagnostics) diag[k] = v;
  return Json{{"test", r.test},
              {"statistic", r.statistic},
              {"threshold", r.threshold},
              {"decision", to_string(r.decision)},
              {"diagnostics", diag}};
}

Json to_json(const FeasibilityResult& r) {
  Json tuples = Json::array();
  for (const auto& [t, w] : r.tuples) tuples.push_back(Json{{"x", t}, {"weight", w}});
  Json out{{"status", r.feasible ? "feasible" : "infeasible"},
           {"max_load", r.max_load},
           {"x_index", r.x_index},
           {"excess", r.excess},
           {"tuples", tuples}};
  out["coupling"] = r.coupling ? array_of(r.coupling->plan) : Json(nullptr);
  return out;
}

Json to_json(const DiscreteFamily& f) {
  Json conds = Json::array();
  for (const auto& c : f.conditionals) conds.push_back(array_of(c));
  return Json{{"support", f.support}, {"pz", array_of(f.pz)}, {"conditionals", conds}};
}

Json to_json(const DiscreteJoint& j) {
  Json conds = Json::array();
  for (const auto& c : j.conditionals) conds.push_back(array_of(c));
  return Json{{"conditionals", conds}};
}

Json to_json(const LawTable& t) {
  Json laws = Json::array();
  for (const auto& l : t.laws) laws.push_back(to_json(l));
  return Json{{"edges", array_of(t.edges)}, {"laws", laws}};
}

Json to_json(const DGPSpec& s) {
  Json first{{"kind", first_stage_name(s.first_stage)},
             {"a", s.a},
             {"b", s.b},
             {"s", s.s},
             {"z_star", s.z_star},
             {"jump", s.jump}};
  if (s.first_table) first["table"] = to_json(*s.first_table);
  Json outcome{{"kind", outcome_name(s.outcome)},
               {"c", s.c},
               {"e", s.e},
               {"x_star", s.x_star},
               {"y_jump", s.y_jump}};
  if (s.outcome_table) outcome["table"] = to_json(*s.outcome_table);
  return Json{{"name", s.name},
              {"first_stage", first},
              {"outcome", outcome},
              {"u_law", to_json(s.u_law)},
              {"v_law", to_json(s.v_law)},
              {"z_law", to_json(s.z_law)},
              {"instrument_valid", s.instrument_valid},
              {"copula_weight", s.copula_weight},
              {"copula_source", s.copula_source}};
}

Json to_json(const ExperimentResult& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back(Json{{"spec", row.spec},
                        {"test", row.test},
                        {"rejection_rate", row.rejection_rate},
                        {"reps", row.reps},
                        {"rejections", row.rejections},
                        {"mean_statistic", row.mean_statistic}});
  return Json{{"rows", rows}};
}

GridDistribution grid_distribution_from_json(const Json& j) {
  return guarded([&] {
    std::vector<Atom> atoms;
    if (j.contains("atoms")) {
      const Json& a = j.at("atoms");
      if (!a.is_array()) throw InputError("atoms must be an array of [location, mass] pairs");
      for (const auto& p : a) {
        if (!p.is_array() || p.size() != 2)
          throw InputError("atoms must be an array of [location, mass] pairs");
        atoms.push_back({number(p[0], "atom location"), number(p[1], "atom mass")});
      }
    }
    return GridDistribution(vector_from(field(j, "edges"), "edges"),
                            vector_from(field(j, "masses"), "masses"), std::move(atoms));
  });
}

GridMeasure2D grid_measure_from_json(const Json& j) {
  return guarded([&] {
    GridMeasure2D m{vector_from(field(j, "y_edges"), "y_edges"),
                    vector_from(field(j, "x_edges"), "x_edges"),
                    matrix_from(field(j, "mass"), "mass")};
    m.validate();
    return m;
  });
}

JointLaw joint_law_from_json(const Json& j) {
  return guarded([&] {
    const Json& conds = field(j, "conditionals");
    if (!conds.is_array()) throw InputError("conditionals must be an array");
    std::vector<GridMeasure2D> cs;
    for (const auto& c : conds) cs.push_back(grid_measure_from_json(c));
    return JointLaw(std_vector_from(field(j, "z_grid"), "z_grid"),
                    grid_distribution_from_json(field(j, "pz")), std::move(cs));
  });
}

GeneratorMap generator_from_json(const Json& j, const JointLaw& joint) {
  return guarded([&] {
    const Json& d = field(j, "depth");
    if (!d.is_number_integer()) throw InputError("depth must be an integer");
    GeneratorMap gen = build_generator(joint, d.get<int>());
    const Json& cells = field(j, "cells");
    if (!cells.is_array() || cells.size() != gen.cells().size())
      throw InputError("generator cells do not match the joint law");
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto addr = field(cells[c], "z_addr").get<std::string>();
      const auto perm = field(cells[c], "perm").get<std::vector<std::uint32_t>>();
      if (addr != gen.cells()[c].node.address || perm != gen.perm(c))
        throw InputError("generator cell " + std::to_string(c) + " does not match the construction");
    }
    return gen;
  });
}

TestReport test_report_from_json(const Json& j) {
  return guarded([&] {
    TestReport r;
    r.test = field(j, "test").get<std::string>();
    r.statistic = number(field(j, "statistic"), "statistic");
    r.threshold = number(field(j, "threshold"), "threshold");
    const auto decision = field(j, "decision").get<std::string>();
    if (decision != "reject" && decision != "consistent")
      throw InputError("decision must be \"reject\" or \"consistent\"");
    r.decision = decision == "reject" ? Decision::reject : Decision::consistent;
    for (const auto& [k, v] : field(j, "diagnostics").items())
      r.diagnostics.emplace_back(k, number(v, "diagnostic"));
    return r;
  });
}

DiscreteFamily discrete_family_from_json(const Json& j) {
  return guarded([&] {
    DiscreteFamily f;
    const Json& conds = field(j, "conditionals");
    if (!conds.is_array() || conds.empty()) throw InputError("conditionals must be a non-empty array");
    for (const auto& c : conds) f.conditionals.push_back(vector_from(c, "conditional"));
    const auto s = static_cast<std::size_t>(f.conditionals.front().size());
    if (j.contains("support")) {
      f.support = std_vector_from(j.at("support"), "support");
    } else {
      for (std::size_t i = 0; i < s; ++i) f.support.push_back(static_cast<double>(i));
    }
    const auto m = static_cast<Eigen::Index>(f.conditionals.size());
    f.pz = j.contains("pz") ? vector_from(j.at("pz"), "pz")
                            : Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    f.validate();
    return f;
  });
}

DiscreteJoint discrete_joint_from_json(const Json& j) {
  return guarded([&] {
    DiscreteJoint d;
    const Json& conds = field(j, "conditionals");
    if (!conds.is_array()) throw InputError("conditionals must be an array");
    for (const auto& c : conds) d.conditionals.push_back(matrix_from(c, "conditional"));
    d.validate();
    return d;
  });
}

DGPSpec dgp_spec_from_json(const Json& j) {
  return guarded([&] {
    if (!j.is_object()) throw InputError("a spec must be a JSON object");
    DGPSpec s;
    s.name = field(j, "name").get<std::string>();
    if (j.contains("first_stage")) {
      const Json& f = j.at("first_stage");
      if (!f.is_object()) throw InputError("first_stage must be an object with a \"kind\"");
      if (f.contains("kind")) s.first_stage = first_stage_kind(f.at("kind").get<std::string>());
      read_number(f, "a", s.a);
      read_number(f, "b", s.b);
      read_number(f, "s", s.s);
      read_number(f, "z_star", s.z_star);
      read_number(f, "jump", s.jump);
      if (f.contains("table")) s.first_table = law_table_from_json(f.at("table"));
    }
    if (j.contains("outcome")) {
      const Json& o = j.at("outcome");
      if (!o.is_object()) throw InputError("outcome must be an object with a \"kind\"");
      if (o.contains("kind")) s.outcome = outcome_kind(o.at("kind").get<std::string>());
      read_number(o, "c", s.c);
      read_number(o, "e", s.e);
      read_number(o, "x_star", s.x_star);
      read_number(o, "y_jump", s.y_jump);
      if (o.contains("table")) s.outcome_table = law_table_from_json(o.at("table"));
    }
    if (j.contains("u_law")) s.u_law = grid_distribution_from_json(j.at("u_law"));
    if (j.contains("v_law")) s.v_law = grid_distribution_from_json(j.at("v_law"));
    if (j.contains("z_law")) s.z_law = grid_distribution_from_json(j.at("z_law"));
    if (j.contains("instrument_valid")) s.instrument_valid = j.at("instrument_valid").get<bool>();
    read_number(j, "copula_weight", s.copula_weight);
    if (j.contains("copula_source")) s.copula_source = j.at("copula_source").get<std::string>();
    s.validate();
    return s;
  });
}

std::vector<DGPSpec> dgp_specs_from_json(const Json& j) {
  const Json* list = &j;
  if (j.is_object() && j.contains("specs")) list = &j.at("specs");
  if (list->is_object()) return {dgp_spec_from_json(*list)};
  if (!list->is_array() || list->empty()) throw InputError("spec file holds no specs");
  std::vector<DGPSpec> out;
  for (const auto& s : *list) out.push_back(dgp_spec_from_json(s));
  return out;
}

ExperimentResult experiment_result_from_json(const Json& j) {
  return guarded([&] {
    ExperimentResult r;
    for (const auto& row : field(j, "rows"))
      r.rows.push_back({field(row, "spec").get<std::string>(), field(row, "test").get<std::string>(),
                        number(field(row, "rejection_rate"), "rejection_rate"),
                        field(row, "reps").get<std::size_t>(),
                        field(row, "rejections").get<std::size_t>(),
                        number(field(row, "mean_statistic"), "mean_statistic")});
    return r;
  });
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

std::string dataset_to_csv(const Dataset& d) {
  std::string out = "y,x,z\n";
  for (const auto& r : d.rows)
    out += format_double(r[0]) + ',' + format_double(r[1]) + ',' + format_double(r[2]) + '\n';
  return out;
}

Dataset dataset_from_csv(const std::string& text, std::string spec_name) {
  Dataset d{{}, 0, std::move(spec_name)};
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "y,x,z") continue;
    std::array<double, 3> row{};
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t k = 0; k < 3; ++k) {
      const auto res = std::from_chars(p, end, row[k]);
      if (res.ec != std::errc{})
        throw InputError("dataset line " + std::to_string(line_no) + " is not y,x,z numbers");
      p = res.ptr;
      if (k < 2) {
        if (p == end || *p != ',')
          throw InputError("dataset line " + std::to_string(line_no) + " needs three columns");
        ++p;
      }
    }
    if (p != end) throw InputError("dataset line " + std::to_string(line_no) + " has extra columns");
    d.rows.push_back(row);
  }
  d.validate();
  return d;
}

std::string reports_to_csv(const std::vector<TestReport>& reports) {
  std::string out = "test,statistic,threshold,decision\n";
  for (const auto& r : reports)
    out += r.test + ',' + format_double(r.statistic) + ',' + format_double(r.threshold) + ',' +
           to_string(r.decision) + '\n';
  return out;
}

std::string experiment_to_csv(const ExperimentResult& r) {
  std::string out = "spec,test,rejection_rate,reps,mean_statistic\n";
  for (const auto& row : r.rows)
    out += row.spec + ',' + row.test + ',' + format_double(row.rejection_rate) + ',' +
           std::to_string(row.reps) + ',' + format_double(row.mean_statistic) + '\n';
  return out;
}

}  // namespace ivt

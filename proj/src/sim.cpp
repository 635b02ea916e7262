#include "ivt/sim.hpp"

#include "ivt/errors.hpp"
#include "ivt/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

namespace ivt {

void LawTable::validate() const {
  if (edges.size() < 2 || static_cast<std::size_t>(edges.size() - 1) != laws.size())
    throw InputError("law table needs one law per interval");
  for (Eigen::Index i = 1; i < edges.size(); ++i)
    if (!(edges(i) > edges(i - 1))) throw InputError("law table edges must be strictly increasing");
}

const GridDistribution& LawTable::at(double key) const {
  const double* first = edges.data();
  const double* last = edges.data() + edges.size();
  auto k = static_cast<std::ptrdiff_t>(std::upper_bound(first, last, key) - first - 1);
  k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(laws.size()) - 1);
  return laws[static_cast<std::size_t>(k)];
}

void DGPSpec::validate() const {
  if (name.empty()) throw InputError("spec name must be non-empty");
  for (double v : {a, b, s, z_star, jump, c, e, x_star, y_jump, copula_weight})
    if (!std::isfinite(v)) throw InputError("spec '" + name + "' has a non-finite parameter");
  if (copula_weight < 0.0 || copula_weight > 1.0)
    throw InputError("spec '" + name + "': copula weight must lie in [0, 1]");
  if (instrument_valid && copula_weight != 0.0)
    throw InputError("spec '" + name + "': a valid instrument has copula weight 0");
  if (copula_source != "u" && copula_source != "v")
    throw InputError("spec '" + name + "': copula source must be \"u\" or \"v\"");
  if (first_stage == FirstStage::scale_shift &&
      !(b + s * z_law.lower() > 0.0 && b + s * z_law.upper() > 0.0))
    throw InputError("spec '" + name + "': scale b + s z must stay positive on the z support");
  if (first_stage == FirstStage::custom) {
    if (!first_table) throw InputError("spec '" + name + "': custom first stage needs a table");
    first_table->validate();
  }
  if (outcome == OutcomeKind::custom) {
    if (!outcome_table) throw InputError("spec '" + name + "': custom outcome needs a table");
    outcome_table->validate();
  }
}

double DGPSpec::first_stage_value(double z, double u) const {
  switch (first_stage) {
    case FirstStage::location_shift:
      return a * z + b * u;
    case FirstStage::scale_shift:
      return a * z + (b + s * z) * u;
    case FirstStage::support_jump:
      return a * z + b * u + (z >= z_star ? jump : 0.0);
    case FirstStage::sign_flip:
      return -a * z + b * u;
    case FirstStage::custom:
      return quantile(first_table->at(z), std::clamp(u_law.cdf(u), 0.0, 1.0));
  }
  return 0.0;
}

double DGPSpec::outcome_value(double x, double v) const {
  switch (outcome) {
    case OutcomeKind::location:
      return c * x + e * v;
    case OutcomeKind::jump:
      return c * x + e * v + (x >= x_star ? y_jump : 0.0);
    case OutcomeKind::custom:
      return quantile(outcome_table->at(x), std::clamp(v_law.cdf(v), 0.0, 1.0));
  }
  return 0.0;
}

void Dataset::validate() const {
  if (rows.empty()) throw InputError("dataset has no rows");
  for (const auto& r : rows)
    for (double v : r)
      if (!std::isfinite(v)) throw InputError("dataset has a non-finite value");
}

Dataset sample(const DGPSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw InputError("sample size must be at least 1");
  std::mt19937_64 rng(seed);
  Dataset out{{}, seed, spec.name};
  out.rows.reserve(n);
  const double w = spec.copula_weight;
  for (std::size_t i = 0; i < n; ++i) {
    const double lu = uniform01(rng);
    const double lv = uniform01(rng);
    const double lz = uniform01(rng);
    const double u = quantile(spec.u_law, lu);
    const double v = quantile(spec.v_law, lv);
    double z = quantile(spec.z_law, lz);
    if (w > 0.0) {
      const double dependent = quantile(spec.z_law, spec.copula_source == "u" ? lu : lv);
      z = (1.0 - w) * z + w * dependent;
    }
    const double x = spec.first_stage_value(z, u);
    out.rows.push_back({spec.outcome_value(x, v), x, z});
  }
  return out;
}

Dataset sample_model(const StructuralModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InputError("sample size must be at least 1");
  std::mt19937_64 z_rng(derive_seed(seed, 0));
  std::mt19937_64 latent(derive_seed(seed, 1));
  Dataset out{{}, seed, "model"};
  out.rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = quantile(model.joint().pz(), uniform01(z_rng));
    const double u = quantile(model.u_law(), uniform01(latent));
    const double v = quantile(model.v_law(), uniform01(latent));
    const auto [y, x] = model.draw(z, u, v);
    out.rows.push_back({y, x, z});
  }
  return out;
}

namespace {

Eigen::VectorXd equal_width_edges(const Dataset& data, std::size_t coord, int bins) {
  double lo = data.rows.front()[coord];
  double hi = lo;
  for (const auto& r : data.rows) {
    lo = std::min(lo, r[coord]);
    hi = std::max(hi, r[coord]);
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  return Eigen::VectorXd::LinSpaced(bins + 1, lo, hi);
}

Eigen::Index bin_index(const Eigen::VectorXd& edges, double v) {
  const Eigen::Index bins = edges.size() - 1;
  const double lo = edges(0);
  const double hi = edges(bins);
  const auto k = static_cast<Eigen::Index>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
  return std::clamp<Eigen::Index>(k, 0, bins - 1);
}

}  // namespace

JointLaw discretize(const Dataset& data, int y_bins, int x_bins, int z_bins) {
  data.validate();
  if (y_bins < 1 || x_bins < 1 || z_bins < 1) throw InputError("bin counts must be at least 1");
  const Eigen::VectorXd ye = equal_width_edges(data, 0, y_bins);
  const Eigen::VectorXd xe = equal_width_edges(data, 1, x_bins);
  const Eigen::VectorXd ze = equal_width_edges(data, 2, z_bins);
  std::vector<Eigen::MatrixXd> counts(static_cast<std::size_t>(z_bins),
                                      Eigen::MatrixXd::Zero(y_bins, x_bins));
  Eigen::VectorXd z_counts = Eigen::VectorXd::Zero(z_bins);
  for (const auto& r : data.rows) {
    const Eigen::Index k = bin_index(ze, r[2]);
    counts[static_cast<std::size_t>(k)](bin_index(ye, r[0]), bin_index(xe, r[1])) += 1.0;
    z_counts(k) += 1.0;
  }
  std::vector<double> z_grid;
  std::vector<GridMeasure2D> conditionals;
  for (Eigen::Index k = 0; k < z_bins; ++k) {
    if (!(z_counts(k) > 0.0))
      throw InputError("z-bin " + std::to_string(k) + " of dataset '" + data.spec_name +
                       "' is empty");
    z_grid.push_back(0.5 * (ze(k) + ze(k + 1)));
    conditionals.push_back({ye, xe, counts[static_cast<std::size_t>(k)] / z_counts(k)});
  }
  const auto n = static_cast<double>(data.rows.size());
  return JointLaw(std::move(z_grid), GridDistribution(ze, z_counts / n), std::move(conditionals));
}

std::string to_string(TestKind t) {
  switch (t) {
    case TestKind::moment:
      return "moment";
    case TestKind::jump:
      return "jump";
    case TestKind::fosd:
      return "fosd";
    case TestKind::sure_decrease:
      return "sure-decrease";
  }
  return "";
}

TestKind parse_test_kind(const std::string& name) {
  for (auto t : {TestKind::moment, TestKind::jump, TestKind::fosd, TestKind::sure_decrease})
    if (to_string(t) == name) return t;
  throw InputError("unknown test '" + name + "'");
}

TestReport run_test(TestKind kind, const JointLaw& joint, const TestSettings& settings) {
  switch (kind) {
    case TestKind::moment:
      return continuity_moment_statistic(joint, settings.continuity);
    case TestKind::jump:
      return jump_test(joint, settings.K, settings.z_star);
    case TestKind::fosd:
      return monotonicity_test(joint, settings.tol);
    case TestKind::sure_decrease:
      return monotonicity_sure_decrease_test(joint, settings.K);
  }
  throw InputError("unknown test");
}

const ExperimentRow* ExperimentResult::find(const std::string& spec, const std::string& test) const {
  for (const auto& r : rows)
    if (r.spec == spec && r.test == test) return &r;
  return nullptr;
}

namespace {

struct RepOutcome {
  std::vector<double> statistic;
  std::vector<bool> reject;
};

[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const FeasibilityRefusal& e) {
    throw FeasibilityRefusal(context + e.what(), e.x_index(), e.excess());
  } catch (const AtomicityError& e) {
    throw AtomicityError(context + e.what());
  } catch (const DegenerateGridError& e) {
    throw DegenerateGridError(context + e.what());
  } catch (const NonInvertibleError& e) {
    throw NonInvertibleError(context + e.what());
  } catch (const MarginalMismatch& e) {
    throw MarginalMismatch(context + e.what());
  } catch (const DomainRefusal& e) {
    throw DomainRefusal(context + e.what());
  } catch (const InputError& e) {
    throw InputError(context + e.what());
  }
}

RepOutcome run_rep(const DGPSpec& spec, const std::vector<TestKind>& tests,
                   const ExperimentOptions& o, std::size_t rep) {
  RepOutcome out;
  const Dataset data = sample(spec, o.n, derive_seed(o.seed, rep));
  const JointLaw law = discretize(data, o.bins[0], o.bins[1], o.bins[2]);
  const auto record = [&](const JointLaw& j) {
    for (auto t : tests) {
      const TestReport r = run_test(t, j, o.settings);
      out.statistic.push_back(r.statistic);
      out.reject.push_back(r.decision == Decision::reject);
    }
  };
  record(law);
  if (o.unrestricted) {
    const DemoResult demo = nontestability_demo(law, o.depth);
    record(induced_law(demo.model));
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const std::vector<DGPSpec>& specs,
                                const std::vector<TestKind>& tests,
                                const ExperimentOptions& options) {
  if (options.reps < 1) throw InputError("reps must be at least 1");
  if (options.n < 1) throw InputError("sample size must be at least 1");
  for (const auto& s : specs) s.validate();
  ExperimentResult result;
  if (tests.empty() || specs.empty()) return result;

  const std::size_t jobs = specs.size() * options.reps;
  std::vector<RepOutcome> outcomes(jobs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= jobs) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (failure) return;
      }
      const auto& spec = specs[job / options.reps];
      const std::size_t rep = job % options.reps;
      try {
        try {
          outcomes[job] = run_rep(spec, tests, options, rep);
        } catch (...) {
          rethrow_with_context("spec '" + spec.name + "', replication " + std::to_string(rep) + ": ");
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned threads = options.threads != 0 ? options.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Reduction in (spec, rep) order regardless of which thread ran what.
  const std::size_t groups = options.unrestricted ? 2 : 1;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t t = 0; t < tests.size(); ++t) {
        ExperimentRow row{specs[s].name + (g == 1 ? kReplicaSuffix : ""), to_string(tests[t]),
                          0.0, options.reps, 0, 0.0};
        double sum = 0.0;
        for (std::size_t r = 0; r < options.reps; ++r) {
          const auto& o = outcomes[s * options.reps + r];
          const std::size_t k = g * tests.size() + t;
          sum += o.statistic[k];
          if (o.reject[k]) ++row.rejections;
        }
        row.rejection_rate =
            static_cast<double>(row.rejections) / static_cast<double>(options.reps);
        row.mean_statistic = sum / static_cast<double>(options.reps);
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

DemoResult nontestability_demo(const JointLaw& joint, int depth) {
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const GridDistribution x = joint.conditionals()[i].x_marginal();
    if (x.has_atoms() || x.positive_bins() < 2)
      throw AtomicityError("x-marginal at z = " + std::to_string(joint.z_grid()[i]) +
                           " is atomic at grid resolution (fewer than 2 positive bins)");
  }
  const GeneratorMap gen = build_generator(joint, depth);
  StructuralModel model = compose_structural_model(joint, gen);
  const double error = verify_replication(model, joint);
  return {std::move(model), error};
}

FeasibilityResult nontestability_demo(const DiscreteFamily& family) {
  FeasibilityResult r = discrete_generator_feasible(family);
  if (!r.feasible)
    throw FeasibilityRefusal("no one-to-one generator: conditionals put total mass " +
                                 std::to_string(r.max_load) + " on x = " +
                                 std::to_string(family.support[r.x_index]) + " (excess " +
                                 std::to_string(r.excess) + ")",
                             r.x_index, r.excess);
  return r;
}

std::vector<DGPSpec> default_suite() {
  DGPSpec location;
  location.name = "location";

  DGPSpec confounded = location;
  confounded.name = "location-confounded";
  confounded.instrument_valid = false;
  confounded.copula_weight = 1.0;
  confounded.copula_source = "v";

  DGPSpec reversed = location;
  reversed.name = "reversed-noise";
  reversed.e = -3.0;

  DGPSpec reversed_confounded = reversed;
  reversed_confounded.name = "reversed-noise-confounded";
  reversed_confounded.instrument_valid = false;
  reversed_confounded.copula_weight = 1.0;
  reversed_confounded.copula_source = "v";

  return {location, confounded, reversed, reversed_confounded};
}

DGPSpec sign_flip_spec() {
  DGPSpec s;
  s.name = "sign-flip";
  s.first_stage = FirstStage::sign_flip;
  return s;
}

}  // namespace ivt

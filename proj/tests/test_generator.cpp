#include "ivt/errors.hpp"
#include "ivt/generator.hpp"
#include "ivt/json_io.hpp"
#include "ivt/random.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace ivt;

namespace {

Eigen::VectorXd linspace(double lo, double hi, Eigen::Index bins) {
  return Eigen::VectorXd::LinSpaced(bins + 1, lo, hi);
}

ConditionalFamily identical_uniform(Eigen::Index z_bins = 1) {
  const auto pz = GridDistribution::uniform(0.0, 1.0, z_bins);
  std::vector<GridDistribution> conds(static_cast<std::size_t>(z_bins),
                                      GridDistribution::uniform(0.0, 1.0));
  return ConditionalFamily::per_cell(pz, conds);
}

// pz uniform on [0, 1] with `bins` bins; bin k carries U[2k, 2k + 1].
ConditionalFamily disjoint_supports(Eigen::Index bins) {
  std::vector<GridDistribution> conds;
  for (Eigen::Index k = 0; k < bins; ++k) conds.push_back(GridDistribution::uniform(2.0 * k, 2.0 * k + 1));
  return ConditionalFamily::per_cell(GridDistribution::uniform(0.0, 1.0, bins), conds);
}

// pz with `k` atoms at 1, 2, ..., k on top of U[0, 1] (half the mass).
GridDistribution mixed_pz(int k) {
  std::vector<Atom> atoms;
  for (int j = 1; j <= k; ++j) atoms.push_back({static_cast<double>(j), 0.5 / k});
  return GridDistribution(linspace(0.0, static_cast<double>(std::max(k, 1)), std::max(k, 1)),
                          [&] {
                            Eigen::VectorXd m = Eigen::VectorXd::Zero(std::max(k, 1));
                            m(0) = k == 0 ? 1.0 : 0.5;
                            return m;
                          }(),
                          atoms);
}

ConditionalFamily identical_with_atoms(int k) {
  const auto pz = mixed_pz(k);
  std::vector<GridDistribution> conds(static_cast<std::size_t>(pz.bins()) + pz.atoms().size(),
                                      GridDistribution::uniform(0.0, 1.0));
  return ConditionalFamily::per_cell(pz, conds);
}

// 8x8x8 joint law with Gaussian-mixture conditionals whose centres move with z.
JointLaw gaussian_mixture_law(int nz = 8, int ny = 8, int nx = 8) {
  const auto pz = GridDistribution::uniform(0.0, 1.0, nz);
  std::vector<double> zs;
  std::vector<GridMeasure2D> conds;
  const auto density = [](double y, double x, double z) {
    const auto bump = [](double a, double b, double s) { return std::exp(-0.5 * (a - b) * (a - b) / (s * s)); };
    return 0.6 * bump(x, 0.3 + 0.4 * z, 0.15) * bump(y, x, 0.2) +
           0.4 * bump(x, 0.8 - 0.5 * z, 0.1) * bump(y, 1.0 - x, 0.15) + 1e-3;
  };
  for (int k = 0; k < nz; ++k) {
    const double z = (k + 0.5) / nz;
    zs.push_back(z);
    Eigen::MatrixXd m(ny, nx);
    for (int i = 0; i < ny; ++i)
      for (int j = 0; j < nx; ++j) m(i, j) = density((i + 0.5) / ny, (j + 0.5) / nx, z);
    conds.push_back({linspace(0.0, 1.0, ny), linspace(0.0, 1.0, nx), m / m.sum()});
  }
  return JointLaw(zs, pz, conds);
}

JointLaw random_law(std::mt19937_64& rng, int nz, int ny, int nx) {
  std::uniform_real_distribution<double> w(0.0, 1.0);
  std::vector<double> zs;
  std::vector<GridMeasure2D> conds;
  Eigen::VectorXd zm(nz);
  for (int k = 0; k < nz; ++k) {
    zm(k) = 0.2 + w(rng);
    zs.push_back((k + 0.5) / nz);
    Eigen::MatrixXd m(ny, nx);
    for (int i = 0; i < ny; ++i)
      for (int j = 0; j < nx; ++j) m(i, j) = w(rng) < 0.25 ? 0.0 : w(rng);
    m(0, 0) += 0.1;
    m(ny - 1, nx - 1) += 0.1;
    conds.push_back({linspace(-1.0, 2.0, ny), linspace(0.0, 3.0, nx), m / m.sum()});
  }
  return JointLaw(zs, GridDistribution::from_weights(linspace(0.0, 1.0, nz), zm), conds);
}

// Exact pushforward written independently of the library: u-cell i of piece
// p lands on the quantile cell permute(i) of the x-marginal; that x-set is
// spread over x-bins by length, then each x-bin column is filled with
// P(Y | X in bin).
Eigen::MatrixXd pushforward_oracle(const GeneratorMap& gen, const GeneratorPiece& p,
                                   const GridMeasure2D& cond) {
  const Eigen::VectorXd col = cond.mass.colwise().sum().transpose();
  std::vector<double> cum{0.0};
  for (Eigen::Index j = 0; j < col.size(); ++j) cum.push_back(cum.back() + col(j));
  Eigen::VectorXd x_mass = Eigen::VectorXd::Zero(col.size());
  const double n = gen.resolution();
  for (std::uint32_t i = 0; i < gen.resolution(); ++i) {
    const double lo = gen.permute(p.cell, i) / n;
    const double hi = (gen.permute(p.cell, i) + 1) / n;
    for (Eigen::Index j = 0; j < col.size(); ++j) {
      const double a = std::max(lo, cum[static_cast<std::size_t>(j)]);
      const double b = std::min(hi, cum[static_cast<std::size_t>(j) + 1]);
      if (b > a) x_mass(j) += b - a;
    }
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cond.mass.rows(), cond.mass.cols());
  for (Eigen::Index j = 0; j < col.size(); ++j)
    if (col(j) > 0.0) out.col(j) = x_mass(j) * cond.mass.col(j) / col(j);
  return out;
}

}  // namespace

TEST(ShiftPermutation, BinaryDigitsAreXorMasks) {
  const std::vector<int> shifts{1, 0, 1};
  const auto perm = shift_permutation(2, shifts);
  for (std::uint32_t i = 0; i < 8; ++i) EXPECT_EQ(perm[i], i ^ 0b101u);
}

TEST(ShiftPermutation, CyclicDigits) {
  const std::vector<int> shifts{2, 1};
  const auto perm = shift_permutation(3, shifts);
  for (std::uint32_t i = 0; i < 9; ++i) {
    const std::uint32_t hi = (i / 3 + 2) % 3;
    const std::uint32_t lo = (i % 3 + 1) % 3;
    EXPECT_EQ(perm[i], hi * 3 + lo);
  }
}

TEST(BuildGenerator, IdenticalConditionalsDepthZeroCollidesEverywhere) {
  const auto gen = build_generator(identical_uniform(), 0);
  EXPECT_EQ(gen.resolution(), 1u);
  EXPECT_EQ(collision_fraction_exact(gen), 1.0);
}

TEST(BuildGenerator, IdenticalUniformDepthOneHalves) {
  const auto gen = build_generator(identical_uniform(), 1);
  ASSERT_EQ(gen.cells().size(), 2u);
  EXPECT_EQ(gen.cells()[0].node.address, "1");
  EXPECT_EQ(gen.perm(0), (std::vector<std::uint32_t>{1, 0}));
  EXPECT_EQ(gen.perm(1), (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(collision_fraction_exact(gen), 0.5);
}

TEST(BuildGenerator, CollisionFractionMatchesDyadicCount) {
  for (int n = 0; n <= 6; ++n) {
    const auto gen = build_generator(identical_uniform(), n);
    EXPECT_EQ(collision_fraction_exact(gen), oracle::dyadic_collision_count(n)) << "depth " << n;
    EXPECT_EQ(collision_fraction_exact(gen), std::ldexp(1.0, -n));
  }
}

TEST(BuildGenerator, CollisionIsIndependentOfPzGrid) {
  // A multi-bin P_Z splits cells across bins; the identity still holds.
  const auto gen = build_generator(identical_uniform(3), 4);
  EXPECT_NEAR(collision_fraction_exact(gen), 1.0 / 16, 1e-15);
}

TEST(BuildGenerator, ChildrenPartitionParents) {
  const auto gen = build_generator(identical_uniform(3), 4);
  const auto pz = gen.family().pz;
  for (const auto& node : gen.tree()) {
    if (node.level == 4) continue;
    MeasurableSet kids;
    for (const auto& other : gen.tree())
      if (other.address == node.address + "1" || other.address == node.address + "2") {
        EXPECT_EQ(other.level, node.level + 1);
        EXPECT_NEAR(measure(pz, other.z_set), measure(pz, node.z_set) / 2, 1e-12);
        EXPECT_TRUE(kids.intersect(other.z_set).empty());
        kids = kids.unite(other.z_set);
      }
    EXPECT_EQ(kids, node.z_set);
  }
}

TEST(BuildGenerator, RefusesAtomicInputs) {
  const auto atom_cond = GridDistribution(linspace(0.0, 1.0, 1), Eigen::VectorXd::Constant(1, 0.5),
                                          {{0.5, 0.5}});
  EXPECT_THROW(build_generator(ConditionalFamily::per_cell(GridDistribution::uniform(0, 1), {atom_cond}), 2),
               AtomicityError);
  EXPECT_THROW(build_generator(identical_with_atoms(1), 2), AtomicityError);
  EXPECT_THROW(build_generator(identical_uniform(), -1), InputError);
}

TEST(BuildGeneratorWithAtoms, SingleAtomCyclicTable) {
  const auto gen = build_generator_with_atoms(identical_with_atoms(1), 1);
  EXPECT_EQ(gen.base(), 3);
  ASSERT_EQ(gen.cells().size(), 3u);
  std::map<std::string, std::vector<std::uint32_t>> perms;
  for (std::size_t c = 0; c < gen.cells().size(); ++c) perms[gen.cells()[c].node.address] = gen.perm(c);
  EXPECT_EQ(perms.at("a1"), (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(perms.at("1"), (std::vector<std::uint32_t>{1, 2, 0}));
  EXPECT_EQ(perms.at("2"), (std::vector<std::uint32_t>{2, 0, 1}));
  EXPECT_EQ(cross_group_collision_fraction(gen), 0.0);
}

TEST(BuildGeneratorWithAtoms, NoAtomsDelegates) {
  const auto a = build_generator_with_atoms(identical_uniform(2), 3);
  const auto b = build_generator(identical_uniform(2), 3);
  EXPECT_EQ(a.base(), 2);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(BuildGeneratorWithAtoms, InjectiveFamilyAtDepthZeroKeepsIdentity) {
  const auto pz = GridDistribution::discrete({0.0, 1.0}, {0.5, 0.5});
  const auto fam = ConditionalFamily::per_cell(
      pz, {GridDistribution::uniform(0, 1), GridDistribution::uniform(0, 1), GridDistribution::uniform(5, 6)});
  const auto gen = build_generator_with_atoms(fam, 0);
  ASSERT_EQ(gen.cells().size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(gen.perm(c), (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(collision_fraction_exact(gen), 0.0);
}

TEST(BuildGeneratorWithAtoms, TopGroupsNeverCollideAfterLevelOne) {
  for (int k = 1; k <= 3; ++k)
    for (int depth = 1; depth <= 3; ++depth) {
      const auto gen = build_generator_with_atoms(identical_with_atoms(k), depth);
      EXPECT_EQ(gen.resolution(), static_cast<std::uint32_t>(std::pow(k + 2, depth)));
      EXPECT_EQ(cross_group_collision_fraction(gen), 0.0) << "k=" << k << " depth=" << depth;
    }
}

TEST(CollisionFraction, MonteCarloTracksExactValue) {
  const auto gen = build_generator(identical_uniform(), 3);
  const double mc = collision_fraction(gen, 20000, 1, 99);
  EXPECT_NEAR(mc, 0.125, 0.01);
  EXPECT_EQ(mc, collision_fraction(gen, 20000, 1, 99));
  EXPECT_EQ(collision_fraction(build_generator(identical_uniform(), 0), 500, 2, 1), 1.0);
}

TEST(CollisionFraction, DisjointSupportsNeverCollide) {
  const auto pz = GridDistribution::discrete({0.0, 1.0, 2.0}, {0.2, 0.3, 0.5});
  const auto fam = ConditionalFamily::per_cell(
      pz, {GridDistribution::uniform(0, 1), GridDistribution::uniform(0, 1),
           GridDistribution::uniform(2, 3), GridDistribution::uniform(4, 5)});
  const auto gen = build_generator_with_atoms(fam, 0);
  EXPECT_EQ(collision_fraction_exact(gen, 4), 0.0);
  EXPECT_EQ(collision_fraction(gen, 2000, 4, 3), 0.0);
}

TEST(InvertGenerator, DepthOneIdenticalUniform) {
  const auto gen = build_generator(identical_uniform(), 1);
  EXPECT_EQ(invert_generator(gen, 0.75, 0.25), "1");
  EXPECT_EQ(invert_generator(gen, 0.25, 0.25), "2");
}

TEST(InvertGenerator, DepthZeroIsNotInvertible) {
  const auto gen = build_generator(identical_uniform(), 0);
  EXPECT_THROW(invert_generator(gen, 0.5, 0.5), NonInvertibleError);
}

TEST(InvertGenerator, DisjointSupportsRecoveredFromSupport) {
  const Eigen::Index bins = 4;
  const auto gen = build_generator(disjoint_supports(bins), 2);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 500; ++t) {
    const double z = uniform01(rng);
    const double u = uniform01(rng);
    const double x = gen(z, u);
    // Support lookup: U[2k, 2k+1] belongs to z-bin k, which is cell k here.
    const auto k = static_cast<int>(std::floor(x / 2.0));
    const std::string expected = std::string(1, "12"[k / 2]) + "12"[k % 2];
    EXPECT_EQ(invert_generator(gen, x, u), expected);
  }
}

TEST(InvertGenerator, RecoversTheCellOfZ) {
  std::mt19937_64 rng(6);
  for (int depth = 1; depth <= 6; ++depth) {
    const auto gen = build_generator(identical_uniform(2), depth);
    for (int t = 0; t < 200; ++t) {
      const double z = uniform01(rng);
      const double u = uniform01(rng);
      const auto& cell = gen.cells()[gen.pieces()[gen.piece_of(z)].cell];
      EXPECT_TRUE(cell.node.z_set.contains(z));
      EXPECT_EQ(invert_generator(gen, gen(z, u), u), cell.node.address);
    }
  }
}

TEST(Generator, PushforwardOfEachCellIsItsConditional) {
  std::mt19937_64 rng(21);
  for (int depth = 0; depth <= 5; ++depth) {
    const auto joint = random_law(rng, 5, 4, 6);
    const auto gen = build_generator(joint, depth);
    for (std::size_t c = 0; c < gen.cells().size(); ++c) {
      auto perm = gen.perm(c);
      std::sort(perm.begin(), perm.end());
      std::vector<std::uint32_t> iota(perm.size());
      std::iota(iota.begin(), iota.end(), 0u);
      EXPECT_EQ(perm, iota);
    }
    for (const auto& p : gen.pieces()) {
      const auto& cond = joint.conditionals()[p.conditional];
      const Eigen::MatrixXd pushed = pushforward_oracle(gen, p, cond);
      EXPECT_LE((pushed - cond.mass).cwiseAbs().sum(), 1e-12);
      // g(z, .) sends the centre of u-cell i into the quantile cell perm(i).
      const double z = 0.5 * (p.z.lo + p.z.hi);
      for (std::uint32_t i = 0; i < gen.resolution(); ++i) {
        const double x = gen(z, (i + 0.5) / gen.resolution());
        EXPECT_EQ(x_cell_of(gen.conditional(p), gen.resolution(), x), gen.permute(p.cell, i));
      }
    }
  }
}

TEST(ComposeStructuralModel, DegenerateOutcomeYEqualsX) {
  const Eigen::Index b = 4;
  const auto pz = GridDistribution::uniform(0.0, 1.0, 2);
  std::vector<GridMeasure2D> conds;
  for (int k = 0; k < 2; ++k) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(b, b);
    for (Eigen::Index j = 0; j < b; ++j) m(j, j) = k == 0 ? 0.25 : (j < 2 ? 0.4 : 0.1);
    conds.push_back({linspace(0, 1, b), linspace(0, 1, b), m});
  }
  const JointLaw joint({0.25, 0.75}, pz, conds);
  const auto model = compose_structural_model(joint, build_generator(joint, 3));
  EXPECT_TRUE(model.independent());
  for (double x : {0.1, 0.3, 0.6, 0.9})
    for (double v : {0.0, 0.5, 0.99}) {
      const double y = model.outcome(x, 0.25, v);
      EXPECT_EQ(std::floor(y * b), std::floor(x * b));
    }
  EXPECT_EQ(verify_replication(model, joint), 0.0);
  EXPECT_LE(verify_replication_raw(model, joint), 1e-15);
}

TEST(ComposeStructuralModel, IndependentOutcomeIsConstantInXandZ) {
  const auto pz = GridDistribution::uniform(0.0, 1.0, 3);
  std::vector<GridMeasure2D> conds;
  const Eigen::VectorXd py = Eigen::VectorXd::Constant(4, 0.25);
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd px(3);
    px << 0.2 + 0.1 * k, 0.5, 0.3 - 0.1 * k;
    conds.push_back({linspace(0, 1, 4), linspace(0, 1, 3), py * px.transpose()});
  }
  const JointLaw joint({0.1, 0.5, 0.9}, pz, conds);
  const auto model = compose_structural_model(joint, build_generator(joint, 4));
  for (double v : {0.1, 0.4, 0.8}) {
    const double y0 = model.outcome(0.1, 0.1, v);
    EXPECT_DOUBLE_EQ(y0, v);
    EXPECT_DOUBLE_EQ(model.outcome(0.9, 0.5, v), y0);
    EXPECT_DOUBLE_EQ(model.outcome(0.5, 0.9, v), y0);
  }
  EXPECT_EQ(verify_replication(model, joint), 0.0);
}

TEST(ComposeStructuralModel, GaussianMixtureAtDepthSix) {
  const auto joint = gaussian_mixture_law();
  const auto model = compose_structural_model(joint, build_generator(joint, 6));
  EXPECT_EQ(verify_replication(model, joint), 0.0);
  double worst = 0.0;
  for (const auto& p : model.generator().pieces())
    worst = std::max(worst, 0.5 * (pushforward_oracle(model.generator(), p, joint.conditionals()[p.conditional]) -
                                   induced_conditional(model, p).mass)
                                      .cwiseAbs()
                                      .sum());
  EXPECT_LE(worst, 1e-12);
}

TEST(ComposeStructuralModel, RejectsForeignGenerator) {
  const auto joint = gaussian_mixture_law();
  std::mt19937_64 rng(2);
  const auto other = random_law(rng, 8, 8, 8);
  EXPECT_THROW(compose_structural_model(joint, build_generator(other, 2)), MarginalMismatch);
}

TEST(ComposeStructuralModel, OutcomeRecoveredThroughTheInverse) {
  // Identical conditionals make every depth-4 cell map distinct, so
  // h(x, u, v') = h'(x, g^{-1}(x, u), v') is defined everywhere.
  const auto base = gaussian_mixture_law(1, 6, 6);
  const JointLaw joint({0.1, 0.4, 0.6, 0.9}, GridDistribution::uniform(0.0, 1.0, 4),
                       std::vector<GridMeasure2D>(4, base.conditionals()[0]));
  const auto model = compose_structural_model(joint, build_generator(joint, 4));
  std::mt19937_64 rng(17);
  for (int t = 0; t < 300; ++t) {
    const double z = uniform01(rng);
    const double u = uniform01(rng);
    const double v = uniform01(rng);
    const auto [y, x] = model.draw(z, u, v);
    EXPECT_DOUBLE_EQ(model.outcome_via_inverse(x, u, v), y);
  }
}

TEST(VerifyReplication, PerturbedConditionalIsDetected) {
  const auto joint = gaussian_mixture_law();
  const auto model = compose_structural_model(joint, build_generator(joint, 6));
  for (double eps : {0.01, 0.05, 0.2}) {
    auto conds = joint.conditionals();
    auto& m = conds[3].mass;
    const double moved = std::min(eps, m(2, 2));
    m(2, 2) -= moved;
    m(5, 1) += moved;
    const JointLaw perturbed(joint.z_grid(), joint.pz(), conds);
    // TV arithmetic: moving mass e between two cells is TV e.
    const double tv = 0.5 * (conds[3].mass - joint.conditionals()[3].mass).cwiseAbs().sum();
    EXPECT_NEAR(tv, moved, 1e-15);
    EXPECT_GE(verify_replication(model, perturbed), tv / 2);
  }
}

TEST(VerifyReplication, IdenticalConditionalsAtDepthZero) {
  const auto pz = GridDistribution::uniform(0.0, 1.0, 4);
  Eigen::MatrixXd m(3, 3);
  m << 0.1, 0.2, 0.05, 0.05, 0.1, 0.2, 0.1, 0.1, 0.1;
  const GridMeasure2D c{linspace(0, 1, 3), linspace(0, 1, 3), m};
  const JointLaw joint({0.1, 0.3, 0.6, 0.9}, pz, {c, c, c, c});
  const auto model = compose_structural_model(joint, build_generator(joint, 0));
  EXPECT_EQ(verify_replication(model, joint), 0.0);
}

TEST(VerifyReplication, ZeroAtEveryDepth) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 5; ++t) {
    const auto joint = random_law(rng, 6, 5, 5);
    for (int depth = 0; depth <= 7; ++depth) {
      const auto model = compose_structural_model(joint, build_generator(joint, depth));
      EXPECT_EQ(verify_replication(model, joint), 0.0) << "depth " << depth;
      EXPECT_LE(verify_replication_raw(model, joint), 1e-12);
      const auto induced = induced_law(model);
      for (std::size_t c = 0; c < joint.size(); ++c)
        EXPECT_LE(total_variation(induced.conditionals()[c], joint.conditionals()[c]), 1e-12);
    }
  }
}

TEST(VerifyReplication, AtomicPzWithCyclicGenerator) {
  const GridDistribution pz(linspace(0.0, 1.0, 2), (Eigen::VectorXd(2) << 0.3, 0.3).finished(),
                            {{1.0, 0.4}});
  const auto base = gaussian_mixture_law(3, 4, 4);
  const JointLaw joint({0.25, 0.75, 1.0}, pz, base.conditionals());
  const auto gen = build_generator(joint, 3);
  EXPECT_EQ(gen.base(), 3);
  const auto model = compose_structural_model(joint, gen);
  EXPECT_EQ(verify_replication(model, joint), 0.0);
}

TEST(GeneratorJson, RoundTrip) {
  const auto joint = gaussian_mixture_law();
  const auto gen = build_generator(joint, 3);
  const Json j = to_json(gen);
  EXPECT_EQ(j.begin().key(), "depth");
  EXPECT_EQ(j.at("cells").size(), 8u);
  EXPECT_EQ(j.at("cells")[0].at("z_addr"), "111");
  const auto back = generator_from_json(Json::parse(j.dump()), joint);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  Json bad = j;
  bad["cells"][0]["perm"][0] = 3;
  EXPECT_THROW(generator_from_json(bad, joint), InputError);
}

TEST(BuildGenerator, DepthTenCollisionFraction) {
  const auto gen = build_generator(identical_uniform(), 10);
  EXPECT_EQ(collision_fraction_exact(gen), std::ldexp(1.0, -10));
}

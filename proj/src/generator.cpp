#include "ivt/generator.hpp"

#include "ivt/errors.hpp"
#include "ivt/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>
#include <string>

namespace ivt {

namespace {

constexpr std::uint64_t kMaxResolution = std::uint64_t{1} << 24;
constexpr std::uint64_t kMaxCells = std::uint64_t{1} << 20;

std::size_t positive_atoms(const GridDistribution& pz) {
  return static_cast<std::size_t>(std::count_if(pz.atoms().begin(), pz.atoms().end(),
                                                [](const Atom& a) { return a.mass > 0.0; }));
}

void check_family(const ConditionalFamily& f) {
  if (f.bin_conditional.size() != static_cast<std::size_t>(f.pz.bins()) ||
      f.atom_conditional.size() != f.pz.atoms().size())
    throw InputError("conditional family does not match pz");
  for (Eigen::Index k = 0; k < f.pz.bins(); ++k) {
    const auto& c = f.bin_conditional[static_cast<std::size_t>(k)];
    if (f.pz.masses()(k) > 0.0 && (!c || *c >= f.conditionals.size()))
      throw InputError("a positive-mass pz bin has no conditional");
  }
  for (std::size_t a = 0; a < f.pz.atoms().size(); ++a)
    if (f.pz.atoms()[a].mass > 0.0 && f.atom_conditional[a] >= f.conditionals.size())
      throw InputError("a pz atom has no conditional");
  for (const auto& c : f.conditionals)
    if (c.has_atoms()) throw AtomicityError("a conditional x-marginal has an atom");
}

std::uint32_t checked_resolution(int base, int depth) {
  if (depth < 0) throw InputError("depth must be non-negative");
  std::uint64_t n = 1;
  for (int m = 0; m < depth; ++m) {
    n *= static_cast<std::uint64_t>(base);
    if (n > kMaxResolution) throw InputError("depth too large for the cell table");
  }
  return static_cast<std::uint32_t>(n);
}

GeneratorMap build(const ConditionalFamily& family, int depth, bool with_atoms) {
  check_family(family);
  const GridDistribution& pz = family.pz;
  const std::size_t k = with_atoms ? positive_atoms(pz) : 0;
  if (!with_atoms && pz.has_atoms())
    throw AtomicityError("pz has atoms; use the atomic construction");
  const int base = static_cast<int>(k) + 2;
  const int shift_first = k == 0 ? 1 : static_cast<int>(k);
  const int shift_second = k == 0 ? 0 : static_cast<int>(k) + 1;
  (void)checked_resolution(base, depth);
  if (pz.continuous_mass() > 0.0 && (std::uint64_t{1} << std::min(depth, 40)) > kMaxCells)
    throw InputError("depth too large for the z-partition");

  std::vector<PartitionNode> tree;
  std::vector<GeneratorCell> cells;

  std::size_t j = 0;
  for (std::size_t a = 0; a < pz.atoms().size(); ++a) {
    if (!(pz.atoms()[a].mass > 0.0)) continue;
    PartitionNode node{"a" + std::to_string(++j), MeasurableSet{}, a, depth};
    tree.push_back(node);
    cells.push_back({node, std::vector<int>(static_cast<std::size_t>(depth),
                                            static_cast<int>(j) - 1)});
  }

  if (pz.continuous_mass() > 0.0) {
    // Splits only see the non-atomic part of P_Z.
    const GridDistribution cont(pz.edges(), pz.masses() / pz.continuous_mass());
    std::vector<GeneratorCell> level{
        {{"", MeasurableSet::of(pz.lower(), pz.upper()), std::nullopt, 0}, {}}};
    tree.push_back(level.front().node);
    for (int m = 1; m <= depth; ++m) {
      std::vector<GeneratorCell> next;
      next.reserve(2 * level.size());
      for (const auto& cell : level) {
        const auto split = split_equal_measure(cont, cell.node.z_set);
        GeneratorCell first{{cell.node.address + "1", split.lower, std::nullopt, m}, cell.shifts};
        GeneratorCell second{{cell.node.address + "2", split.upper, std::nullopt, m}, cell.shifts};
        first.shifts.push_back(shift_first);
        second.shifts.push_back(shift_second);
        next.push_back(std::move(first));
        next.push_back(std::move(second));
      }
      for (const auto& c : next) tree.push_back(c.node);
      level = std::move(next);
    }
    for (auto& c : level) cells.push_back(std::move(c));
  }
  return GeneratorMap(family, depth, base, std::move(cells), std::move(tree));
}

}  // namespace

ConditionalFamily ConditionalFamily::from_joint(const JointLaw& joint) {
  ConditionalFamily f{joint.pz(), joint.x_marginals(), {}, {}};
  for (Eigen::Index k = 0; k < joint.pz().bins(); ++k)
    f.bin_conditional.push_back(joint.conditional_of_bin(k));
  for (std::size_t a = 0; a < joint.pz().atoms().size(); ++a)
    f.atom_conditional.push_back(joint.conditional_of_atom(a));
  return f;
}

ConditionalFamily ConditionalFamily::per_cell(GridDistribution pz,
                                              std::vector<GridDistribution> conditionals) {
  const auto bins = static_cast<std::size_t>(pz.bins());
  if (conditionals.size() != bins + pz.atoms().size())
    throw InputError("need one conditional per pz bin and per atom");
  ConditionalFamily f{std::move(pz), std::move(conditionals), {}, {}};
  for (std::size_t k = 0; k < bins; ++k) {
    if (f.pz.masses()(static_cast<Eigen::Index>(k)) > 0.0)
      f.bin_conditional.emplace_back(k);
    else
      f.bin_conditional.emplace_back(std::nullopt);
  }
  for (std::size_t a = 0; a < f.pz.atoms().size(); ++a) f.atom_conditional.push_back(bins + a);
  return f;
}

GeneratorMap::GeneratorMap(ConditionalFamily family, int depth, int base,
                           std::vector<GeneratorCell> cells, std::vector<PartitionNode> tree)
    : family_(std::move(family)),
      depth_(depth),
      base_(base),
      resolution_(checked_resolution(base, depth)),
      cells_(std::move(cells)),
      tree_(std::move(tree)) {
  const auto& pz = family_.pz;
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const auto& node = cells_[c].node;
    if (cells_[c].shifts.size() != static_cast<std::size_t>(depth_))
      throw InputError("cell shift table does not match depth");
    if (node.atom) {
      const auto& atom = pz.atoms()[*node.atom];
      pieces_.push_back({c, family_.atom_conditional[*node.atom], atom.mass,
                         {atom.location, atom.location}, true});
      continue;
    }
    for (const auto& iv : node.z_set.intervals()) {
      for (Eigen::Index k = 0; k < pz.bins(); ++k) {
        const double m = pz.masses()(k);
        if (!(m > 0.0)) continue;
        const double a = pz.edges()(k);
        const double b = pz.edges()(k + 1);
        const Interval part{std::max(a, iv.lo), std::min(b, iv.hi)};
        if (part.empty()) continue;
        const double w = m * (part.length() / (b - a));
        pieces_.push_back({c, *family_.bin_conditional[static_cast<std::size_t>(k)], w, part,
                           false});
      }
    }
  }
  for (std::size_t p = 0; p < pieces_.size(); ++p)
    if (!pieces_[p].atom) by_z_.push_back(p);
  std::sort(by_z_.begin(), by_z_.end(),
            [&](std::size_t a, std::size_t b) { return pieces_[a].z.lo < pieces_[b].z.lo; });
}

std::uint32_t GeneratorMap::permute(std::size_t cell, std::uint32_t i) const {
  const auto& shifts = cells_[cell].shifts;
  const auto b = static_cast<std::uint32_t>(base_);
  std::uint32_t out = 0;
  std::uint32_t place = 1;
  // Least significant digit is the deepest level.
  for (std::size_t m = shifts.size(); m-- > 0;) {
    const std::uint32_t digit = i % b;
    i /= b;
    out += ((digit + static_cast<std::uint32_t>(shifts[m])) % b) * place;
    place *= b;
  }
  return out;
}

std::vector<std::uint32_t> GeneratorMap::perm(std::size_t cell) const {
  std::vector<std::uint32_t> out(resolution_);
  for (std::uint32_t i = 0; i < resolution_; ++i) out[i] = permute(cell, i);
  return out;
}

std::size_t GeneratorMap::piece_of(double z) const {
  const auto& pz = family_.pz;
  if (!(z >= pz.lower() && z <= pz.upper()))
    throw InputError("z = " + std::to_string(z) + " lies outside the support of pz");
  for (std::size_t p = 0; p < pieces_.size(); ++p)
    if (pieces_[p].atom && pieces_[p].z.lo == z) return p;
  if (by_z_.empty()) throw InputError("z = " + std::to_string(z) + " is not an atom of pz");
  auto it = std::upper_bound(by_z_.begin(), by_z_.end(), z,
                             [&](double v, std::size_t p) { return v < pieces_[p].z.lo; });
  // Points in null gaps, and the closing edge, go to the preceding piece.
  if (it == by_z_.begin()) return *it;
  return *std::prev(it);
}

std::uint32_t GeneratorMap::u_cell(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw InputError("u must lie in [0, 1]");
  const auto i = static_cast<std::uint64_t>(u * static_cast<double>(resolution_));
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(i, resolution_ - 1));
}

double GeneratorMap::operator()(double z, double u) const {
  const auto& piece = pieces_[piece_of(z)];
  const std::uint32_t i = u_cell(u);
  const double n = static_cast<double>(resolution_);
  const double frac = u * n - static_cast<double>(i);
  const double level = std::clamp((static_cast<double>(permute(piece.cell, i)) + frac) / n, 0.0, 1.0);
  return quantile(conditional(piece), level);
}

std::vector<std::uint32_t> shift_permutation(int base, std::span<const int> shifts) {
  const auto b = static_cast<std::uint32_t>(base);
  const std::uint32_t n = checked_resolution(base, static_cast<int>(shifts.size()));
  std::vector<std::uint32_t> out(n, 0);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t rest = i;
    std::uint32_t place = 1;
    for (std::size_t m = shifts.size(); m-- > 0;) {
      out[i] += (((rest % b) + static_cast<std::uint32_t>(shifts[m])) % b) * place;
      rest /= b;
      place *= b;
    }
  }
  return out;
}

Interval u_cell_interval(std::uint32_t resolution, std::uint32_t j) {
  const double n = static_cast<double>(resolution);
  return {static_cast<double>(j) / n, static_cast<double>(j + 1) / n};
}

Interval x_cell_interval(const GridDistribution& conditional, std::uint32_t resolution,
                         std::uint32_t j) {
  const Interval levels = u_cell_interval(resolution, j);
  return {quantile_right(conditional, levels.lo), quantile(conditional, std::min(1.0, levels.hi))};
}

std::optional<std::uint32_t> x_cell_of(const GridDistribution& conditional,
                                       std::uint32_t resolution, double x) {
  const auto bin = conditional.bin_of(x);
  if (!bin || !(conditional.masses()(*bin) > 0.0)) return std::nullopt;
  const auto j = static_cast<std::uint64_t>(conditional.cdf(x) * static_cast<double>(resolution));
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(j, resolution - 1));
}

GeneratorMap build_generator(const ConditionalFamily& family, int depth) {
  return build(family, depth, false);
}

GeneratorMap build_generator(const JointLaw& joint, int depth) {
  const auto family = ConditionalFamily::from_joint(joint);
  return family.pz.has_atoms() ? build(family, depth, true) : build(family, depth, false);
}

GeneratorMap build_generator_with_atoms(const ConditionalFamily& family, int depth) {
  return build(family, depth, positive_atoms(family.pz) > 0);
}

namespace {

// Sum over u sub-cells of the ordered-pair mass of pieces in different groups
// whose x-images overlap with positive length, divided by the sub-cell count.
double overlap_mass(const GeneratorMap& gen, int u_refine,
                    const std::vector<std::size_t>& group, std::size_t groups) {
  if (u_refine < 1) throw InputError("u resolution must be at least 1");
  const auto& pieces = gen.pieces();
  const std::uint32_t n = gen.resolution();
  const double sub = static_cast<double>(n) * u_refine;
  struct Image {
    double lo;
    double hi;
    std::size_t piece;
  };
  std::vector<Image> images(pieces.size());
  std::vector<double> active(groups, 0.0);
  double total = 0.0;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (int t = 0; t < u_refine; ++t) {
      for (std::size_t p = 0; p < pieces.size(); ++p) {
        const double base = static_cast<double>(gen.permute(pieces[p].cell, i)) * u_refine + t;
        const double lo = base / sub;
        const double hi = std::min(1.0, (base + 1.0) / sub);
        const auto& cond = gen.conditional(pieces[p]);
        images[p] = {quantile_right(cond, lo), quantile(cond, hi), p};
      }
      std::sort(images.begin(), images.end(),
                [](const Image& a, const Image& b) { return a.lo < b.lo; });
      using Entry = std::pair<double, std::size_t>;
      std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
      std::fill(active.begin(), active.end(), 0.0);
      double active_total = 0.0;
      double cell = 0.0;
      for (const auto& img : images) {
        if (!(img.hi > img.lo)) continue;
        while (!open.empty() && open.top().first <= img.lo) {
          const auto p = open.top().second;
          open.pop();
          active[group[p]] -= pieces[p].mass;
          active_total -= pieces[p].mass;
        }
        const double w = pieces[img.piece].mass;
        const double others = active_total - active[group[img.piece]];
        if (others > 0.0) cell += 2.0 * w * others;
        open.emplace(img.hi, img.piece);
        active[group[img.piece]] += w;
        active_total += w;
      }
      total += cell;
    }
  }
  return total / sub;
}

std::vector<std::size_t> top_groups(const GeneratorMap& gen, std::size_t& count) {
  std::vector<std::size_t> group;
  std::vector<std::string> names;
  for (const auto& p : gen.pieces()) {
    const auto& addr = gen.cells()[p.cell].node.address;
    const std::string key = p.atom ? addr : addr.substr(0, 1);
    auto it = std::find(names.begin(), names.end(), key);
    if (it == names.end()) {
      names.push_back(key);
      it = std::prev(names.end());
    }
    group.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  count = names.size();
  return group;
}

}  // namespace

double collision_fraction_exact(const GeneratorMap& gen, int u_refine) {
  const auto& pieces = gen.pieces();
  std::vector<std::size_t> group(pieces.size());
  for (std::size_t p = 0; p < pieces.size(); ++p) group[p] = p;
  double self = 0.0;
  // Two distinct z in one non-atomic piece share conditional and map.
  for (const auto& p : pieces)
    if (!p.atom) self += p.mass * p.mass;
  return overlap_mass(gen, u_refine, group, pieces.size()) + self;
}

double cross_group_collision_fraction(const GeneratorMap& gen, int u_refine) {
  std::size_t count = 0;
  const auto group = top_groups(gen, count);
  std::vector<double> weight(count, 0.0);
  for (std::size_t p = 0; p < gen.pieces().size(); ++p) weight[group[p]] += gen.pieces()[p].mass;
  double all = 0.0;
  double same = 0.0;
  for (double w : weight) {
    all += w;
    same += w * w;
  }
  const double pair_mass = all * all - same;
  if (!(pair_mass > 0.0)) return 0.0;
  return overlap_mass(gen, u_refine, group, count) / pair_mass;
}

double collision_fraction(const GeneratorMap& gen, std::size_t z_pairs, int u_refine,
                          std::uint64_t seed) {
  if (z_pairs == 0) throw InputError("need at least one z-pair");
  if (u_refine < 1) throw InputError("u resolution must be at least 1");
  std::mt19937_64 rng(seed);
  const auto& pz = gen.family().pz;
  const std::uint32_t n = gen.resolution();
  const double sub = static_cast<double>(n) * u_refine;
  const auto draw = [&] { return gen.piece_of(quantile(pz, uniform01(rng))); };
  double hits = 0.0;
  for (std::size_t s = 0; s < z_pairs; ++s) {
    const std::size_t a = draw();
    const std::size_t b = draw();
    const auto& pa = gen.pieces()[a];
    const auto& pb = gen.pieces()[b];
    if (a == b) {
      if (!pa.atom) hits += 1.0;
      continue;
    }
    std::size_t count = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
      for (int t = 0; t < u_refine; ++t) {
        const auto image = [&](const GeneratorPiece& p) {
          const double base = static_cast<double>(gen.permute(p.cell, i)) * u_refine + t;
          const auto& cond = gen.conditional(p);
          return Interval{quantile_right(cond, base / sub),
                          quantile(cond, std::min(1.0, (base + 1.0) / sub))};
        };
        const Interval x = image(pa);
        const Interval y = image(pb);
        if (std::min(x.hi, y.hi) > std::max(x.lo, y.lo)) ++count;
      }
    }
    hits += static_cast<double>(count) / sub;
  }
  return hits / static_cast<double>(z_pairs);
}

std::string invert_generator(const GeneratorMap& gen, double x, double u) {
  const std::uint32_t i = gen.u_cell(u);
  std::set<std::size_t> matches;
  for (const auto& p : gen.pieces()) {
    const auto j = x_cell_of(gen.conditional(p), gen.resolution(), x);
    if (j && *j == gen.permute(p.cell, i)) matches.insert(p.cell);
  }
  if (matches.empty())
    throw NonInvertibleError("no z-cell maps this u-cell onto the cell of x");
  if (matches.size() > 1)
    throw NonInvertibleError(std::to_string(matches.size()) +
                             " z-cells map this u-cell onto the cell of x; depth too small");
  const auto& node = gen.cells()[*matches.begin()].node;
  if (!node.atom && node.address.empty())
    throw NonInvertibleError("the non-atomic z-range is unsplit at depth 0");
  return node.address;
}

StructuralModel::StructuralModel(JointLaw joint, GeneratorMap generator)
    : joint_(std::move(joint)),
      generator_(std::move(generator)),
      u_law_(GridDistribution::uniform(0.0, 1.0)),
      v_law_(GridDistribution::uniform(0.0, 1.0)) {
  const auto& fam = generator_.family();
  const auto expected = ConditionalFamily::from_joint(joint_);
  if (!(fam.pz == expected.pz) || fam.conditionals.size() != expected.conditionals.size() ||
      fam.bin_conditional != expected.bin_conditional ||
      fam.atom_conditional != expected.atom_conditional)
    throw MarginalMismatch("generator was built for a different z-structure");
  for (std::size_t c = 0; c < fam.conditionals.size(); ++c) {
    if (!(fam.conditionals[c].edges().size() == expected.conditionals[c].edges().size() &&
          fam.conditionals[c].edges() == expected.conditionals[c].edges()) ||
        cdf_distance_sup(fam.conditionals[c], expected.conditionals[c]) > kInternalTolerance)
      throw MarginalMismatch("generator conditional " + std::to_string(c) +
                             " differs from the joint's x-marginal");
  }
  for (const auto& cond : joint_.conditionals()) {
    std::vector<std::optional<GridDistribution>> laws;
    for (Eigen::Index j = 0; j < cond.mass.cols(); ++j) {
      if (cond.mass.col(j).sum() > 0.0)
        laws.emplace_back(cond.y_given_x(j));
      else
        laws.emplace_back(std::nullopt);
    }
    outcome_laws_.push_back(std::move(laws));
  }
}

const GridDistribution& StructuralModel::outcome_law(std::size_t c, Eigen::Index j) const {
  const auto& laws = outcome_laws_.at(c);
  const auto& slot = laws.at(static_cast<std::size_t>(j));
  if (!slot) throw InputError("x-bin carries no mass under this conditional");
  return *slot;
}

namespace {

// x-bin of a generated x; a value on the closing edge of a positive bin is
// attributed to that bin.
Eigen::Index outcome_bin(const GridMeasure2D& cond, double x) {
  const auto& e = cond.x_edges;
  if (!(x >= e(0) && x <= e(e.size() - 1))) throw InputError("x lies outside the x-grid");
  const double* first = e.data();
  const double* last = e.data() + e.size();
  auto j = static_cast<Eigen::Index>(std::upper_bound(first, last, x) - first - 1);
  j = std::min<Eigen::Index>(j, cond.mass.cols() - 1);
  if (cond.mass.col(j).sum() > 0.0) return j;
  if (j > 0 && x == e(j) && cond.mass.col(j - 1).sum() > 0.0) return j - 1;
  throw InputError("x lies in a zero-mass x-bin of the conditional");
}

}  // namespace

double StructuralModel::outcome(double x, double z, double v) const {
  const auto& piece = generator_.pieces()[generator_.piece_of(z)];
  const auto& cond = joint_.conditionals()[piece.conditional];
  return quantile(outcome_law(piece.conditional, outcome_bin(cond, x)), v);
}

double StructuralModel::outcome_via_inverse(double x, double u, double v) const {
  const std::string address = invert_generator(generator_, x, u);
  const std::uint32_t i = generator_.u_cell(u);
  for (const auto& p : generator_.pieces()) {
    if (generator_.cells()[p.cell].node.address != address) continue;
    const auto j = x_cell_of(generator_.conditional(p), generator_.resolution(), x);
    if (!j || *j != generator_.permute(p.cell, i)) continue;
    const auto& cond = joint_.conditionals()[p.conditional];
    return quantile(outcome_law(p.conditional, outcome_bin(cond, x)), v);
  }
  throw NonInvertibleError("inverted z-cell has no matching piece");
}

std::pair<double, double> StructuralModel::draw(double z, double u, double v) const {
  const double x = generator_(z, u);
  return {outcome(x, z, v), x};
}

StructuralModel compose_structural_model(const JointLaw& joint, const GeneratorMap& gen) {
  return StructuralModel(joint, gen);
}

namespace {

// P(X in bin b) when u-cell i lands on quantile cell perm(i): the length of
// each landing cell inside [F_b, F_{b+1}), summed in landing-cell order.
Eigen::VectorXd cell_x_masses(const Eigen::VectorXd& x_masses, std::uint32_t n,
                              const std::vector<std::uint32_t>& hits) {
  const Eigen::Index bins = x_masses.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(bins);
  const double nn = static_cast<double>(n);
  Eigen::Index last = bins - 1;
  while (last > 0 && !(x_masses(last) > 0.0)) --last;
  double lo = 0.0;
  for (Eigen::Index b = 0; b <= last; ++b) {
    // The last positive bin closes at level 1 whatever the rounding.
    const double hi = b == last ? 1.0 : lo + x_masses(b);
    if (hi > lo) {
      const auto first = static_cast<std::uint32_t>(std::min(nn - 1.0, std::floor(lo * nn)));
      for (std::uint32_t j = first; j < n; ++j) {
        const Interval cell = u_cell_interval(n, j);
        if (cell.lo >= hi) break;
        const double len = std::min(cell.hi, hi) - std::max(cell.lo, lo);
        if (len > 0.0) out(b) += static_cast<double>(hits[j]) * len;
      }
    }
    lo = hi;
  }
  return out;
}

GridMeasure2D push_columns(const GridMeasure2D& shape, const Eigen::VectorXd& x_mass,
                           const std::function<const Eigen::VectorXd*(Eigen::Index)>& column) {
  GridMeasure2D out{shape.y_edges, shape.x_edges,
                    Eigen::MatrixXd::Zero(shape.mass.rows(), shape.mass.cols())};
  for (Eigen::Index j = 0; j < x_mass.size(); ++j) {
    if (!(x_mass(j) > 0.0)) continue;
    const Eigen::VectorXd* col = column(j);
    if (col == nullptr) throw InputError("positive x-mass on a zero-mass column");
    out.mass.col(j) = x_mass(j) * *col;
  }
  return out;
}

void require_compatible(const JointLaw& a, const JointLaw& b) {
  if (a.size() != b.size()) throw InputError("joint laws have different z-grids");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& p = a.conditionals()[i];
    const auto& q = b.conditionals()[i];
    if (p.y_edges.size() != q.y_edges.size() || p.x_edges.size() != q.x_edges.size() ||
        p.y_edges != q.y_edges || p.x_edges != q.x_edges)
      throw InputError("joint laws have different (y, x) grids");
  }
}

}  // namespace

GridMeasure2D induced_conditional(const StructuralModel& model, const GeneratorPiece& p) {
  const auto& gen = model.generator();
  const auto& cond = model.joint().conditionals()[p.conditional];
  const std::uint32_t n = gen.resolution();
  std::vector<std::uint32_t> hits(n, 0);
  for (std::uint32_t i = 0; i < n; ++i) ++hits[gen.permute(p.cell, i)];
  const Eigen::VectorXd x_mass = cell_x_masses(cond.mass.colwise().sum().transpose(), n, hits);
  return push_columns(cond, x_mass, [&](Eigen::Index j) -> const Eigen::VectorXd* {
    return &model.outcome_law(p.conditional, j).masses();
  });
}

GridMeasure2D cell_representation(const GridMeasure2D& conditional, std::uint32_t resolution) {
  const std::vector<std::uint32_t> hits(resolution, 1);
  const Eigen::VectorXd x_mass =
      cell_x_masses(conditional.mass.colwise().sum().transpose(), resolution, hits);
  std::vector<std::optional<GridDistribution>> cols;
  for (Eigen::Index j = 0; j < conditional.mass.cols(); ++j) {
    if (conditional.mass.col(j).sum() > 0.0)
      cols.emplace_back(conditional.y_given_x(j));
    else
      cols.emplace_back(std::nullopt);
  }
  return push_columns(conditional, x_mass, [&](Eigen::Index j) -> const Eigen::VectorXd* {
    const auto& c = cols[static_cast<std::size_t>(j)];
    return c ? &c->masses() : nullptr;
  });
}

double verify_replication(const StructuralModel& model, const JointLaw& joint) {
  require_compatible(model.joint(), joint);
  const std::uint32_t n = model.generator().resolution();
  std::vector<std::optional<GridMeasure2D>> reference(joint.size());
  double worst = 0.0;
  for (const auto& p : model.generator().pieces()) {
    auto& ref = reference[p.conditional];
    if (!ref) ref = cell_representation(joint.conditionals()[p.conditional], n);
    worst = std::max(worst, total_variation(induced_conditional(model, p), *ref));
  }
  return worst;
}

double verify_replication_raw(const StructuralModel& model, const JointLaw& joint) {
  require_compatible(model.joint(), joint);
  double worst = 0.0;
  for (const auto& p : model.generator().pieces())
    worst = std::max(worst, total_variation(induced_conditional(model, p),
                                            joint.conditionals()[p.conditional]));
  return worst;
}

JointLaw induced_law(const StructuralModel& model) {
  const auto& joint = model.joint();
  std::vector<GridMeasure2D> conditionals;
  for (std::size_t c = 0; c < joint.size(); ++c) {
    std::optional<GridMeasure2D> first;
    Eigen::MatrixXd mixture;
    double weight = 0.0;
    bool uniform = true;
    for (const auto& p : model.generator().pieces()) {
      if (p.conditional != c) continue;
      GridMeasure2D m = induced_conditional(model, p);
      if (!first) {
        first = m;
        mixture = Eigen::MatrixXd::Zero(m.mass.rows(), m.mass.cols());
      } else if (!(m.mass == first->mass)) {
        uniform = false;
      }
      mixture += p.mass * m.mass;
      weight += p.mass;
    }
    if (!first) {
      // Entries over a zero-mass region are never reached by the model.
      conditionals.push_back(joint.conditionals()[c]);
      continue;
    }
    if (!uniform) first->mass = mixture / weight;
    conditionals.push_back(std::move(*first));
  }
  return JointLaw(joint.z_grid(), joint.pz(), std::move(conditionals));
}

}  // namespace ivt

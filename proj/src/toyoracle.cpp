#include "ogd/toyoracle.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ogd {

namespace {

constexpr double kCoincident = 1e-8;

struct PairTerm {
  double energy;
  double d1;  // dphi/dr
  double d2;  // d2phi/dr2
};

PairTerm harmonic(double r, const Bond& b) {
  const double dr = r - b.r0;
  return {0.5 * b.k * dr * dr, b.k * dr, b.k};
}

PairTerm lennard_jones(double r, const LennardJones& lj) {
  const double s6 = std::pow(lj.sigma / r, 6);
  const double s12 = s6 * s6;
  return {4.0 * lj.epsilon * (s12 - s6), 4.0 * lj.epsilon * (-12.0 * s12 + 6.0 * s6) / r,
          4.0 * lj.epsilon * (156.0 * s12 - 42.0 * s6) / (r * r)};
}

// Visits every interacting pair; returns false on a coincident pair.
template <class Fn>
bool for_each_pair(const ToyPotential& pot, const Positions& x, Fn&& fn) {
  for (const auto& b : pot.bonds()) {
    const Eigen::RowVector3d d = x.row(b.i) - x.row(b.j);
    const double r = d.norm();
    if (r < kCoincident) return false;
    fn(b.i, b.j, d, r, harmonic(r, b));
  }
  if (const auto& lj = pot.lj(); lj && lj->epsilon > 0.0) {
    const int n = pot.n_atoms();
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (pot.is_bonded(i, j)) continue;
        const Eigen::RowVector3d d = x.row(i) - x.row(j);
        const double r = d.norm();
        if (r < kCoincident) return false;
        if (r >= lj->cutoff) continue;
        fn(i, j, d, r, lennard_jones(r, *lj));
      }
    }
  }
  return true;
}

void check_atoms(const ToyPotential& pot, const Positions& positions) {
  if (positions.rows() != pot.n_atoms()) {
    throw ShapeMismatch("potential expects " + std::to_string(pot.n_atoms()) + " atoms, got " +
                        std::to_string(positions.rows()));
  }
}

}  // namespace

ToyPotential::ToyPotential(int n_atoms, std::vector<Bond> bonds, std::optional<LennardJones> lj)
    : n_atoms_(n_atoms), bonds_(std::move(bonds)), lj_(lj) {
  if (n_atoms_ < 1) throw InvalidParameter("potential needs at least one atom");
  bonded_.assign(static_cast<std::size_t>(n_atoms_) * n_atoms_, false);
  for (const auto& b : bonds_) {
    if (b.i == b.j) throw InvalidParameter("bond joins an atom to itself");
    if (b.i < 0 || b.j < 0 || b.i >= n_atoms_ || b.j >= n_atoms_) throw InvalidParameter("bond index out of range");
    if (!(b.k > 0.0)) throw InvalidParameter("bond stiffness must be positive");
    if (!(b.r0 > 0.0)) throw InvalidParameter("bond rest length must be positive");
    bonded_[index(b.i, b.j)] = true;
    bonded_[index(b.j, b.i)] = true;
  }
  if (lj_) {
    if (!(lj_->epsilon >= 0.0)) throw InvalidParameter("LJ epsilon must be >= 0");
    if (!(lj_->sigma > 0.0)) throw InvalidParameter("LJ sigma must be positive");
    if (!(lj_->cutoff > 0.0)) throw InvalidParameter("LJ cutoff must be positive");
  }
}

Scalarization parse_scalarization(const std::string& name) {
  if (name == "rms") return Scalarization::rms;
  if (name == "mean-norm" || name == "mean_norm") return Scalarization::mean_norm;
  throw InvalidParameter("unknown scalarization '" + name + "'");
}

std::string to_string(Scalarization s) { return s == Scalarization::rms ? "rms" : "mean-norm"; }

OracleEval evaluate(const ToyPotential& pot, const Positions& positions) {
  check_atoms(pot, positions);
  OracleEval out;
  out.gradient = Positions::Zero(positions.rows(), 3);
  if (!positions.allFinite()) return out;

  double energy = 0.0;
  Positions grad = Positions::Zero(positions.rows(), 3);
  const bool ok = for_each_pair(pot, positions, [&](int i, int j, const Eigen::RowVector3d& d, double r, PairTerm p) {
    energy += p.energy;
    const Eigen::RowVector3d f = (p.d1 / r) * d;
    grad.row(i) += f;
    grad.row(j) -= f;
  });
  if (!ok || !std::isfinite(energy) || !grad.allFinite()) return out;

  out.energy = energy;
  out.gradient = std::move(grad);
  out.converged = true;
  return out;
}

double scalarize(const OracleEval& eval, Scalarization s) {
  if (!eval.converged || eval.gradient.rows() == 0) return 0.0;
  if (s == Scalarization::rms) return std::sqrt(eval.gradient.squaredNorm() / static_cast<double>(eval.gradient.size()));
  return eval.gradient.colwise().mean().norm();
}

double objective(const ToyPotential& pot, const Positions& positions, Scalarization s) {
  return scalarize(evaluate(pot, positions), s);
}

Positions hessian_vector_product(const ToyPotential& pot, const Positions& positions, const Positions& v) {
  check_atoms(pot, positions);
  if (v.rows() != positions.rows()) throw ShapeMismatch("direction rows differ from atom count");
  Positions out = Positions::Zero(positions.rows(), 3);
  for_each_pair(pot, positions, [&](int i, int j, const Eigen::RowVector3d& d, double r, PairTerm p) {
    const Eigen::RowVector3d u = d / r;
    const Eigen::RowVector3d w = v.row(i) - v.row(j);
    const double uw = u.dot(w);
    const Eigen::RowVector3d bw = p.d2 * uw * u + (p.d1 / r) * (w - uw * u);
    out.row(i) += bw;
    out.row(j) -= bw;
  });
  return out;
}

Positions objective_gradient(const ToyPotential& pot, const Positions& positions) {
  const OracleEval ev = evaluate(pot, positions);
  const double rms = scalarize(ev, Scalarization::rms);
  if (!ev.converged || rms == 0.0) return Positions::Zero(positions.rows(), 3);
  return hessian_vector_product(pot, positions, ev.gradient) / (static_cast<double>(ev.gradient.size()) * rms);
}

RelaxResult relax(const ToyPotential& pot, const Positions& positions, const RelaxOptions& opts) {
  RelaxResult res;
  if (!positions.allFinite()) {
    res.positions = positions;
    res.energy = res.force_rms = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  res.positions = project_zero_cog(positions);
  OracleEval ev = evaluate(pot, res.positions);
  res.energy = ev.energy;
  res.force_rms = scalarize(ev);
  if (!ev.converged) return res;
  res.energy_trace.push_back(res.energy);

  // Descent steps move along a gradient whose columns sum to zero, so the centre of
  // gravity only drifts by rounding; re-centre once at the end.
  auto finish = [&](bool converged) {
    res.positions = project_zero_cog(res.positions);
    ev = evaluate(pot, res.positions);
    res.energy = ev.energy;
    res.force_rms = scalarize(ev);
    res.converged = converged;
    return res;
  };

  int failures = 0;
  while (true) {
    if (res.force_rms < opts.tol) return finish(true);
    if (res.iterations >= opts.max_iters) return finish(false);

    const double slope = ev.gradient.squaredNorm();
    double step = opts.initial_step;
    while (true) {
      Positions trial = res.positions - step * ev.gradient;
      OracleEval tev = evaluate(pot, trial);
      if (tev.converged && tev.energy <= res.energy - opts.armijo * step * slope) {
        res.positions = std::move(trial);
        ev = std::move(tev);
        res.energy = ev.energy;
        res.force_rms = scalarize(ev);
        res.energy_trace.push_back(res.energy);
        failures = 0;
        break;
      }
      step *= opts.shrink;
      if (++failures >= opts.max_failures) return finish(false);
    }
    ++res.iterations;
  }
}

PropertyEval surrogate_property(const PointState& state) {
  const auto n = static_cast<double>(state.n_atoms());
  PropertyEval out;
  out.value = std::sqrt(state.positions.squaredNorm() / n);
  out.gradient = out.value > 0.0 ? Positions(state.positions / (n * out.value))
                                 : Positions(Positions::Zero(state.n_atoms(), 3));
  return out;
}

std::string ToyOracle::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "toy:n=" << pot_.n_atoms();
  for (const auto& b : pot_.bonds()) os << ";bond=" << b.i << "," << b.j << "," << b.k << "," << b.r0;
  if (pot_.lj()) os << ";lj=" << pot_.lj()->epsilon << "," << pot_.lj()->sigma << "," << pot_.lj()->cutoff;
  return os.str();
}

}  // namespace ogd

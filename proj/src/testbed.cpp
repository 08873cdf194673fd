#include "ogd/testbed.hpp"

#include <cmath>
#include <numbers>

namespace ogd {

ToyPotential ring_potential(const RingSpec& spec) {
  if (spec.n_atoms < 1) throw InvalidParameter("ring needs at least one atom");
  std::vector<Bond> bonds;
  if (spec.n_atoms == 2) {
    bonds.push_back({0, 1, spec.bond_k, spec.r0});
  } else if (spec.n_atoms > 2) {
    for (int i = 0; i < spec.n_atoms; ++i) bonds.push_back({i, (i + 1) % spec.n_atoms, spec.bond_k, spec.r0});
  }
  std::optional<LennardJones> lj;
  if (spec.lj_epsilon > 0.0) lj = LennardJones{spec.lj_epsilon, spec.lj_sigma, spec.lj_cutoff};
  return ToyPotential(spec.n_atoms, std::move(bonds), lj);
}

PointState ring_geometry(int n_atoms, double edge, int feature_dim) {
  PointState s = PointState::zeros(n_atoms, feature_dim);
  if (n_atoms == 1) return s;
  const double radius = edge / (2.0 * std::sin(std::numbers::pi / n_atoms));
  for (int i = 0; i < n_atoms; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / n_atoms;
    s.positions(i, 0) = radius * std::cos(phi);
    s.positions(i, 1) = radius * std::sin(phi);
  }
  s.positions = project_zero_cog(s.positions);
  return s;
}

Testbed ring_testbed(const RingSpec& spec) {
  Testbed tb{spec, ring_potential(spec), ring_geometry(spec.n_atoms, spec.r0 * spec.stretch, spec.feature_dim),
             PointState{}, 0.0, 0.0};
  RelaxOptions opts;
  opts.tol = 1e-10;
  opts.max_iters = 100000;
  const RelaxResult r = relax(tb.potential, ring_geometry(spec.n_atoms, spec.r0, spec.feature_dim).positions, opts);
  tb.relaxed = PointState(r.positions, Features::Zero(spec.n_atoms, spec.feature_dim));
  tb.relaxed_energy = r.energy;
  tb.relaxed_rg = surrogate_property(tb.relaxed).value;
  return tb;
}

}  // namespace ogd

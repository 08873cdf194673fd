#pragma once

#include "ogd/denoiser.hpp"
#include "ogd/geomstate.hpp"
#include "ogd/toyoracle.hpp"

namespace ogd {

/// Planar ring of harmonic bonds (i, i+1 mod N) with LJ between non-bonded atoms.
struct RingSpec {
  int n_atoms = 4;
  double bond_k = 10.0;
  double r0 = 1.0;
  double lj_epsilon = 0.05;
  double lj_sigma = 1.0;
  double lj_cutoff = 3.0;
  double stretch = 1.3;        // edge of the target geometry in units of r0
  double target_scale = 0.1;   // clean-data spread of the Gaussian target
  int feature_dim = 0;
};

ToyPotential ring_potential(const RingSpec& spec);

/// Regular polygon with the given edge length in the xy plane, centred at the origin.
PointState ring_geometry(int n_atoms, double edge, int feature_dim = 0);

/// A stretched-ring target distribution together with the potential whose minimum it
/// misses. The relaxed geometry is the potential's local minimum near the ring.
struct Testbed {
  RingSpec spec;
  ToyPotential potential;
  PointState target_mean;
  PointState relaxed;
  double relaxed_energy = 0.0;
  double relaxed_rg = 0.0;

  Denoiser denoiser() const { return Denoiser::gaussian(target_mean, spec.target_scale); }
};

Testbed ring_testbed(const RingSpec& spec = {});

}  // namespace ogd

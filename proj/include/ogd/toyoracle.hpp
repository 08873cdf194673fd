#pragma once

#include "ogd/geomstate.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ogd {

struct Bond {
  int i = 0;
  int j = 1;
  double k = 1.0;   // energy / length^2
  double r0 = 1.0;  // length
};

struct LennardJones {
  double epsilon = 0.0;
  double sigma = 1.0;
  double cutoff = 2.5;
};

/// Harmonic bonds plus an optional Lennard-Jones term over all non-bonded pairs.
/// The LJ term uses a hard cutoff without smoothing, so energy jumps at r = cutoff.
class ToyPotential {
 public:
  ToyPotential(int n_atoms, std::vector<Bond> bonds, std::optional<LennardJones> lj = std::nullopt);

  int n_atoms() const { return n_atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  const std::optional<LennardJones>& lj() const { return lj_; }
  bool is_bonded(int i, int j) const { return bonded_[index(i, j)]; }

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * n_atoms_ + j; }

  int n_atoms_;
  std::vector<Bond> bonds_;
  std::optional<LennardJones> lj_;
  std::vector<bool> bonded_;
};

/// Energy, raw gradient dE/dx (no sign flip) and a convergence flag. The gradient is
/// all-zeros whenever converged is false.
struct OracleEval {
  double energy = 0.0;
  Positions gradient;
  bool converged = false;
};

enum class Scalarization { rms, mean_norm };

Scalarization parse_scalarization(const std::string& name);
std::string to_string(Scalarization s);

OracleEval evaluate(const ToyPotential& pot, const Positions& positions);

/// Force RMS over all 3N components (or the norm of the mean per-atom gradient).
/// Zero when the evaluation failed.
double scalarize(const OracleEval& eval, Scalarization s = Scalarization::rms);
double objective(const ToyPotential& pot, const Positions& positions, Scalarization s = Scalarization::rms);

/// Analytic Hessian-vector product of the potential energy.
Positions hessian_vector_product(const ToyPotential& pot, const Positions& positions, const Positions& v);

/// Analytic gradient of the force-RMS objective, H g / (3N * rms). Zero at rms = 0.
Positions objective_gradient(const ToyPotential& pot, const Positions& positions);

struct RelaxOptions {
  int max_iters = 10000;
  double tol = 1e-6;
  double initial_step = 0.1;
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_failures = 50;
};

struct RelaxResult {
  Positions positions;
  double energy = 0.0;
  double force_rms = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> energy_trace;  // energy of every accepted iterate, start included
};

/// Steepest descent with Armijo backtracking. Every accepted step lowers the energy;
/// `max_failures` consecutive rejected trial steps count as divergence.
RelaxResult relax(const ToyPotential& pot, const Positions& positions, const RelaxOptions& opts = {});

struct PropertyEval {
  double value = 0.0;
  Positions gradient;
};

/// Property of a decoded state with its exact positions gradient.
using Property = std::function<PropertyEval(const PointState&)>;

/// Radius of gyration about the origin, sqrt(mean |x_i|^2), with gradient x_i / (N Rg).
PropertyEval surrogate_property(const PointState& state);

/// Black-box energy/force oracle. Implementations must be safe to call concurrently.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual OracleEval evaluate(const Positions& positions) const = 0;
  virtual std::optional<RelaxResult> relax(const Positions&, const RelaxOptions&) const { return std::nullopt; }
  virtual std::string describe() const = 0;
};

class ToyOracle final : public Oracle {
 public:
  explicit ToyOracle(ToyPotential pot) : pot_(std::move(pot)) {}

  OracleEval evaluate(const Positions& positions) const override { return ogd::evaluate(pot_, positions); }
  std::optional<RelaxResult> relax(const Positions& positions, const RelaxOptions& opts) const override {
    return ogd::relax(pot_, positions, opts);
  }
  std::string describe() const override;
  const ToyPotential& potential() const { return pot_; }

 private:
  ToyPotential pot_;
};

/// Forwards to another oracle and counts evaluate() calls.
class CountingOracle final : public Oracle {
 public:
  explicit CountingOracle(std::shared_ptr<const Oracle> inner) : inner_(std::move(inner)) {}

  OracleEval evaluate(const Positions& positions) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->evaluate(positions);
  }
  std::optional<RelaxResult> relax(const Positions& p, const RelaxOptions& o) const override {
    return inner_->relax(p, o);
  }
  std::string describe() const override { return inner_->describe(); }

  long calls() const { return calls_.load(); }
  void reset() { calls_.store(0); }

 private:
  std::shared_ptr<const Oracle> inner_;
  mutable std::atomic<long> calls_{0};
};

}  // namespace ogd

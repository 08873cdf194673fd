#pragma once

#include "ogd/schedule.hpp"
#include "ogd/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ogd {

/// The diffused object: positions plus per-atom features.
struct PointState {
  Positions positions;
  Features features;
  bool cog_constrained = true;

  PointState() = default;
  explicit PointState(Positions pos, Features feat = {}, bool constrained = true);

  static PointState zeros(int n_atoms, int feature_dim = 0);

  int n_atoms() const { return static_cast<int>(positions.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  /// Throws when N = 0, shapes disagree, entries are non-finite, or the
  /// centre of gravity drifted (constrained states only, tolerance `cog_tol`).
  void validate(double cog_tol = 1e-10) const;
  bool same_shape(const PointState& other) const;
};

struct AtomLabels {
  std::vector<std::string> symbols;

  static AtomLabels uniform(int n_atoms, const std::string& symbol = "C");
  std::size_t size() const { return symbols.size(); }
};

/// Subtracts the per-axis mean so every column sums to zero.
Positions project_zero_cog(const Positions& positions);
double max_abs_column_mean(const Positions& positions);

/// Source of standard-normal draws. Samplers draw every random tensor through this
/// interface, which lets tests inject transformed noise streams.
class NoiseStream {
 public:
  virtual ~NoiseStream() = default;
  virtual Positions positions(int n_atoms) = 0;
  virtual Features features(int n_atoms, int dim) = 0;
};

class RngNoiseStream final : public NoiseStream {
 public:
  explicit RngNoiseStream(std::uint64_t seed) : engine_(seed) {}

  Positions positions(int n_atoms) override;
  Features features(int n_atoms, int dim) override;
  double normal() { return normal_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/// Rotates every positions draw of an underlying stream by R (rows become rows * R^T).
class RotatedNoiseStream final : public NoiseStream {
 public:
  RotatedNoiseStream(NoiseStream& base, const Rotation& rotation) : base_(base), rotation_(rotation) {}

  Positions positions(int n_atoms) override { return base_.positions(n_atoms) * rotation_.transpose(); }
  Features features(int n_atoms, int dim) override { return base_.features(n_atoms, dim); }

 private:
  NoiseStream& base_;
  Rotation rotation_;
};

/// U ~ N(0, 1)^{N x 3}, optionally centred per sample.
Positions sample_perturbation(int n_atoms, NoiseStream& rng, bool center = true);

/// Draws a full noise state (positions centred when the template is constrained).
PointState sample_noise_like(const PointState& like, NoiseStream& rng);

PointState apply_rotation(const PointState& state, const Rotation& rotation);
bool is_orthogonal(const Rotation& r, double tol = 1e-10);
Rotation rotation_about_axis(const Eigen::Vector3d& axis, double angle);
Rotation random_rotation(std::mt19937_64& engine);

/// splitmix64 mix of (seed, index); used for per-chain seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Tensor operations lifted to full states (applied blockwise).
PointState forward_diffuse(const PointState& x0, int t, const PointState& eps, const NoiseSchedule& sched);
PointState posterior_mean(const PointState& xt, const PointState& eps_pred, int t, const NoiseSchedule& sched);
PointState t0_estimate(const PointState& xt, const PointState& eps_pred, int t, const NoiseSchedule& sched);

}  // namespace ogd

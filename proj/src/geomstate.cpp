#include "ogd/geomstate.hpp"

#include <cmath>

namespace ogd {

PointState::PointState(Positions pos, Features feat, bool constrained)
    : positions(std::move(pos)), features(std::move(feat)), cog_constrained(constrained) {
  if (features.rows() == 0 && features.cols() == 0) features.resize(positions.rows(), 0);
}

PointState PointState::zeros(int n_atoms, int feature_dim) {
  return PointState(Positions::Zero(n_atoms, 3), Features::Zero(n_atoms, feature_dim));
}

void PointState::validate(double cog_tol) const {
  if (positions.rows() < 1) throw InvalidParameter("state needs at least one atom");
  if (features.rows() != positions.rows()) {
    throw ShapeMismatch("features have " + std::to_string(features.rows()) + " rows, positions " +
                        std::to_string(positions.rows()));
  }
  if (!positions.allFinite() || !features.allFinite()) throw NonFiniteInput("state has non-finite entries");
  if (cog_constrained && max_abs_column_mean(positions) > cog_tol) {
    throw InvalidParameter("state violates the zero centre-of-gravity constraint");
  }
}

bool PointState::same_shape(const PointState& other) const {
  return positions.rows() == other.positions.rows() && features.rows() == other.features.rows() &&
         features.cols() == other.features.cols();
}

AtomLabels AtomLabels::uniform(int n_atoms, const std::string& symbol) {
  return AtomLabels{std::vector<std::string>(static_cast<std::size_t>(n_atoms), symbol)};
}

Positions project_zero_cog(const Positions& positions) {
  if (positions.rows() < 1) throw InvalidParameter("projection needs at least one atom");
  if (!positions.allFinite()) throw NonFiniteInput("cannot centre non-finite positions");
  const Eigen::RowVector3d mean = positions.colwise().mean();
  return positions.rowwise() - mean;
}

double max_abs_column_mean(const Positions& positions) {
  if (positions.rows() == 0) return 0.0;
  return positions.colwise().mean().cwiseAbs().maxCoeff();
}

Positions RngNoiseStream::positions(int n_atoms) {
  Positions out(n_atoms, 3);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal_(engine_);
  return out;
}

Features RngNoiseStream::features(int n_atoms, int dim) {
  Features out(n_atoms, dim);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal_(engine_);
  return out;
}

Positions sample_perturbation(int n_atoms, NoiseStream& rng, bool center) {
  if (n_atoms < 1) throw InvalidParameter("perturbation needs at least one atom");
  Positions u = rng.positions(n_atoms);
  return center ? project_zero_cog(u) : u;
}

PointState sample_noise_like(const PointState& like, NoiseStream& rng) {
  PointState out;
  out.cog_constrained = like.cog_constrained;
  out.positions = sample_perturbation(like.n_atoms(), rng, like.cog_constrained);
  out.features = rng.features(like.n_atoms(), like.feature_dim());
  return out;
}

bool is_orthogonal(const Rotation& r, double tol) {
  return ((r.transpose() * r) - Rotation::Identity()).cwiseAbs().maxCoeff() <= tol;
}

PointState apply_rotation(const PointState& state, const Rotation& rotation) {
  if (!is_orthogonal(rotation)) throw InvalidParameter("rotation matrix is not orthogonal");
  PointState out = state;
  out.positions = state.positions * rotation.transpose();
  return out;
}

Rotation rotation_about_axis(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Rotation random_rotation(std::mt19937_64& engine) {
  std::normal_distribution<double> normal;
  Eigen::Vector4d q(normal(engine), normal(engine), normal(engine), normal(engine));
  q.normalize();
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

void check_state_shapes(const PointState& a, const PointState& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("states have different shapes");
}

}  // namespace

PointState forward_diffuse(const PointState& x0, int t, const PointState& eps, const NoiseSchedule& sched) {
  check_state_shapes(x0, eps);
  PointState out;
  out.cog_constrained = x0.cog_constrained;
  out.positions = forward_diffuse(x0.positions, t, eps.positions, sched);
  out.features = forward_diffuse(x0.features, t, eps.features, sched);
  return out;
}

PointState posterior_mean(const PointState& xt, const PointState& eps_pred, int t, const NoiseSchedule& sched) {
  check_state_shapes(xt, eps_pred);
  PointState out;
  out.cog_constrained = xt.cog_constrained;
  out.positions = posterior_mean(xt.positions, eps_pred.positions, t, sched);
  out.features = posterior_mean(xt.features, eps_pred.features, t, sched);
  return out;
}

PointState t0_estimate(const PointState& xt, const PointState& eps_pred, int t, const NoiseSchedule& sched) {
  check_state_shapes(xt, eps_pred);
  PointState out;
  out.cog_constrained = xt.cog_constrained;
  out.positions = t0_estimate(xt.positions, eps_pred.positions, t, sched);
  out.features = t0_estimate(xt.features, eps_pred.features, t, sched);
  return out;
}

}  // namespace ogd

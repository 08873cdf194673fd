#include "doctest.h"
#include "support.hpp"

#include <cmath>
#include <numbers>

using namespace ogd;

namespace {

Positions rows(std::initializer_list<std::initializer_list<double>> data) {
  Positions p(static_cast<Eigen::Index>(data.size()), 3);
  Eigen::Index i = 0;
  for (const auto& r : data) {
    Eigen::Index j = 0;
    for (double v : r) p(i, j++) = v;
    ++i;
  }
  return p;
}

}  // namespace

TEST_CASE("zero centre of gravity projection") {
  CHECK(project_zero_cog(rows({{1, 2, 3}, {3, 2, 1}})) == rows({{-1, 0, 1}, {1, 0, -1}}));
  CHECK(project_zero_cog(rows({{5, 5, 5}})) == rows({{0, 0, 0}}));
  const Positions c = rows({{-1, 0.5, 2}, {1, -0.5, -2}});
  CHECK(test::max_abs_diff(project_zero_cog(c), c) <= 1e-15);
  CHECK_THROWS_AS(project_zero_cog(Positions(0, 3)), InvalidParameter);
  Positions bad = c;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(project_zero_cog(bad), NonFiniteInput);
}

TEST_CASE("property: projection is idempotent, linear and commutes with rotation") {
  test::Gen gen(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = gen.integer(1, 12);
    const Positions a = gen.positions(n, 3.0) + Positions::Constant(n, 3, gen.uniform(-10, 10));
    const Positions b = gen.positions(n);
    const double c = gen.uniform(-2, 2);
    const Positions pa = project_zero_cog(a);
    CHECK(max_abs_column_mean(pa) <= 1e-12);
    CHECK(test::max_abs_diff(project_zero_cog(pa), pa) <= 1e-12);
    CHECK(test::max_abs_diff(project_zero_cog(Positions(a + c * b)), Positions(pa + c * project_zero_cog(b))) <= 1e-11);
    const Rotation r = gen.rotation();
    CHECK(test::max_abs_diff(project_zero_cog(Positions(a * r.transpose())), Positions(pa * r.transpose())) <= 1e-12);
  }
}

TEST_CASE("state validation") {
  PointState s(rows({{1, 0, 0}, {-1, 0, 0}}));
  CHECK(s.feature_dim() == 0);
  CHECK_NOTHROW(s.validate());
  s.positions(0, 0) = 1.5;
  CHECK_THROWS_AS(s.validate(), InvalidParameter);
  s.cog_constrained = false;
  CHECK_NOTHROW(s.validate());
  s.positions(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(s.validate(), NonFiniteInput);
  CHECK_THROWS_AS(PointState::zeros(0).validate(), InvalidParameter);
  CHECK_THROWS_AS(PointState(Positions::Zero(2, 3), Features::Zero(3, 1)).validate(), ShapeMismatch);
  CHECK(PointState::zeros(3, 2).same_shape(PointState::zeros(3, 2)));
  CHECK_FALSE(PointState::zeros(3, 2).same_shape(PointState::zeros(3, 1)));
}

TEST_CASE("perturbations") {
  RngNoiseStream a(5);
  RngNoiseStream b(5);
  const Positions u = sample_perturbation(2, a);
  CHECK(u == sample_perturbation(2, b));
  CHECK(u.colwise().sum().cwiseAbs().maxCoeff() <= 1e-15);

  RngNoiseStream c(6);
  const Positions raw = sample_perturbation(4, c, false);
  CHECK(max_abs_column_mean(raw) > 1e-3);
  CHECK_THROWS_AS(sample_perturbation(0, c), InvalidParameter);
}

TEST_CASE("perturbation entries are standard normal on average") {
  RngNoiseStream rng(7);
  const int draws = 10000;
  const int n = 3;
  double sum = 0.0;
  double sq = 0.0;
  for (int k = 0; k < draws; ++k) {
    const Positions u = sample_perturbation(n, rng, false);
    sum += u.sum();
    sq += u.squaredNorm();
  }
  const double count = static_cast<double>(draws) * 3 * n;
  CHECK(std::abs(sum / count) < 4.0 / std::sqrt(count));
  CHECK(std::abs(sq / count - 1.0) < 0.02);
}

TEST_CASE("noise of a constrained state is centred, features are not") {
  RngNoiseStream rng(8);
  const PointState e = sample_noise_like(PointState::zeros(5, 2), rng);
  CHECK(max_abs_column_mean(e.positions) <= 1e-15);
  CHECK(e.features.rows() == 5);
  CHECK(e.features.cols() == 2);
  CHECK(e.features.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("rotations") {
  const PointState s(rows({{1, 0, 0}}), {}, false);
  const Rotation rz = rotation_about_axis(Eigen::Vector3d::UnitZ(), std::numbers::pi / 2);
  CHECK(test::max_abs_diff(apply_rotation(s, rz).positions, rows({{0, 1, 0}})) <= 1e-15);
  CHECK(apply_rotation(s, Rotation::Identity()).positions == s.positions);
  CHECK_THROWS_AS(apply_rotation(s, 2.0 * Rotation::Identity()), InvalidParameter);

  test::Gen gen(22);
  for (int trial = 0; trial < 50; ++trial) {
    const Rotation r1 = gen.rotation();
    const Rotation r2 = gen.rotation();
    CHECK(is_orthogonal(r1));
    CHECK(r1.determinant() > 0.0);
    const PointState x = gen.state(6, 1);
    const PointState seq = apply_rotation(apply_rotation(x, r2), r1);
    const PointState once = apply_rotation(x, r1 * r2);
    CHECK(test::max_abs_diff(seq.positions, once.positions) <= 1e-12);
    CHECK(seq.features == x.features);
  }
}

TEST_CASE("rotated noise stream rotates every position draw") {
  const Rotation r = rotation_about_axis(Eigen::Vector3d(1, 2, 3), 0.7);
  RngNoiseStream plain(9);
  RngNoiseStream base(9);
  RotatedNoiseStream rotated(base, r);
  for (int k = 0; k < 5; ++k) {
    const Positions p = plain.positions(4);
    CHECK(test::max_abs_diff(rotated.positions(4), Positions(p * r.transpose())) <= 1e-15);
    CHECK(plain.features(4, 2) == rotated.features(4, 2));
  }
}

TEST_CASE("derived seeds differ per index and are stable") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("state tensor operations act blockwise") {
  const NoiseSchedule sched = test::constant_schedule(3, 0.1);
  test::Gen gen(23);
  const PointState x0 = gen.state(4, 2);
  const PointState eps = gen.state(4, 2);
  const PointState xt = forward_diffuse(x0, 2, eps, sched);
  CHECK(xt.positions == forward_diffuse(x0.positions, 2, eps.positions, sched));
  CHECK(xt.features == forward_diffuse(x0.features, 2, eps.features, sched));
  const PointState back = t0_estimate(xt, eps, 2, sched);
  CHECK(test::max_abs_diff(back.positions, x0.positions) <= 1e-12);
  CHECK((back.features - x0.features).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(forward_diffuse(x0, 2, gen.state(3, 2), sched), ShapeMismatch);
}

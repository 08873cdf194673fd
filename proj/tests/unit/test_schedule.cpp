#include "doctest.h"
#include "support.hpp"

#include <cmath>

using namespace ogd;
using doctest::Approx;

TEST_CASE("constant schedule tables") {
  const NoiseSchedule s = test::constant_schedule(3, 0.1);
  // alpha_t = 0.9^(t/2), sigma_t^2 = (1 - alpha_{t-1}^2) / (1 - alpha_t^2) * beta
  for (int t = 0; t <= 3; ++t) CHECK(s.alpha(t) == Approx(std::pow(0.9, t / 2.0)).epsilon(1e-14));
  CHECK(s.alpha(1) == Approx(0.948683).epsilon(1e-6));
  CHECK(s.alpha(3) == Approx(0.853815).epsilon(1e-6));
  CHECK(s.sigma(1) == 0.0);
  CHECK(s.sigma(2) == Approx(std::sqrt(0.1 / 0.19 * 0.1)).epsilon(1e-14));
  CHECK(s.sigma(2) == Approx(0.229416).epsilon(1e-6));
  CHECK(s.sigma(3) == Approx(std::sqrt(0.19 / 0.271 * 0.1)).epsilon(1e-14));
  CHECK(s.sigma(3) == Approx(0.264784).epsilon(1e-6));
}

TEST_CASE("single step schedule has no posterior noise") {
  CHECK(test::constant_schedule(1, 0.1).sigma(1) == 0.0);
}

TEST_CASE("default linear schedule") {
  const NoiseSchedule s = build_schedule({});
  REQUIRE(s.steps() == 1000);
  // Independent product over the betas.
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0;
    CHECK(s.beta(t) == Approx(beta).epsilon(1e-12));
    prod *= 1.0 - beta;
    CHECK(s.alpha(t) == Approx(std::sqrt(prod)).epsilon(1e-10));
    CHECK(s.alpha(t) < s.alpha(t - 1));
  }
  CHECK(s.alpha(1000) < 1e-2);
  CHECK(s.alpha(1000) > 0.0);
}

TEST_CASE("schedule invariants hold for every kind") {
  for (auto kind : {ScheduleKind::constant, ScheduleKind::linear, ScheduleKind::polynomial}) {
    for (int steps : {1, 2, 10, 1000}) {
      ScheduleSpec spec;
      spec.kind = kind;
      spec.steps = steps;
      const NoiseSchedule s = build_schedule(spec);
      CHECK(s.alpha(0) == 1.0);
      CHECK(s.sigma(1) == 0.0);
      for (int t = 1; t <= steps; ++t) {
        CHECK(s.beta(t) > 0.0);
        CHECK(s.beta(t) < 1.0);
        CHECK(s.alpha(t) < s.alpha(t - 1));
        CHECK(s.sigma(t) >= 0.0);
        CHECK(std::abs(s.alpha(t) * s.alpha(t) - (1 - s.beta(t)) * s.alpha(t - 1) * s.alpha(t - 1)) < 1e-12);
        CHECK(std::abs(s.alpha(t) * s.alpha(t) + s.noise_level(t) * s.noise_level(t) - 1.0) < 1e-12);
        const ProjectionCoeffs pc = projection_coeffs(t, s);
        CHECK(std::abs(pc.signal * pc.signal + pc.noise * pc.noise - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("schedule construction is pure") {
  ScheduleSpec spec;
  spec.kind = ScheduleKind::polynomial;
  const NoiseSchedule a = build_schedule(spec);
  const NoiseSchedule b = build_schedule(spec);
  CHECK(std::equal(a.alphas().begin(), a.alphas().end(), b.alphas().begin()));
  CHECK(std::equal(a.sigmas().begin(), a.sigmas().end(), b.sigmas().begin()));
  CHECK(std::equal(a.betas().begin(), a.betas().end(), b.betas().begin()));
}

TEST_CASE("invalid schedules are rejected") {
  ScheduleSpec spec;
  spec.steps = 0;
  CHECK_THROWS_AS(build_schedule(spec), InvalidParameter);
  spec = {};
  spec.beta_end = 1.0;
  CHECK_THROWS_AS(build_schedule(spec), InvalidParameter);
  spec = {};
  spec.beta_start = -0.1;
  CHECK_THROWS_AS(build_schedule(spec), InvalidParameter);
  CHECK_THROWS_AS(parse_schedule_kind("cosine"), InvalidParameter);
  CHECK(parse_schedule_kind("polynomial") == ScheduleKind::polynomial);
  CHECK(to_string(ScheduleKind::linear) == "linear");
}

TEST_CASE("step indices are range checked") {
  const NoiseSchedule s = test::constant_schedule(3, 0.1);
  CHECK_THROWS_AS(s.beta(0), StepOutOfRange);
  CHECK_THROWS_AS(s.beta(4), StepOutOfRange);
  CHECK_THROWS_AS(s.alpha(-1), StepOutOfRange);
  CHECK_THROWS_AS(forward_diffuse(1.0, 0, 1.0, s), StepOutOfRange);
  CHECK_THROWS_AS(posterior_mean(1.0, 1.0, 4, s), StepOutOfRange);
}

TEST_CASE("scalar tensor operations") {
  const NoiseSchedule s = test::constant_schedule(3, 0.1);
  const double xt = forward_diffuse(2.0, 2, 0.5, s);
  CHECK(xt == Approx(0.9 * 2.0 + std::sqrt(0.19) * 0.5).epsilon(1e-14));
  CHECK(xt == Approx(2.017945).epsilon(1e-6));
  CHECK(forward_diffuse(3.0, 3, 0.0, s) == Approx(s.alpha(3) * 3.0).epsilon(1e-15));
  CHECK(forward_diffuse(0.0, 3, 1.5, s) == Approx(s.noise_level(3) * 1.5).epsilon(1e-15));

  const double mean = posterior_mean(2.017945, 0.5, 2, s);
  CHECK(mean == Approx((2.017945 - 0.1 / std::sqrt(0.19) * 0.5) / std::sqrt(0.9)).epsilon(1e-14));
  CHECK(mean == Approx(2.006188).epsilon(1e-6));
  CHECK(posterior_mean(1.7, 0.0, 3, s) == Approx(1.7 / std::sqrt(0.9)).epsilon(1e-15));

  CHECK(t0_estimate(xt, 0.5, 2, s) == Approx(2.0).epsilon(1e-15));
  CHECK(std::abs(t0_estimate(2.017945, 0.5, 2, s) - 2.0) < 1e-6);
  CHECK(t0_estimate(1.3, 0.0, 3, s) == Approx(1.3 / s.alpha(3)).epsilon(1e-15));
}

TEST_CASE("matrix tensor operations check shapes") {
  const NoiseSchedule s = test::constant_schedule(3, 0.1);
  const Positions a = Positions::Zero(2, 3);
  const Positions b = Positions::Zero(3, 3);
  CHECK_THROWS_AS(forward_diffuse(a, 1, b, s), ShapeMismatch);
  CHECK_THROWS_AS(t0_estimate(a, b, 1, s), ShapeMismatch);
}

TEST_CASE("property: t0 estimate inverts forward diffusion") {
  const NoiseSchedule s = build_schedule({});
  test::Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = gen.integer(1, 1000);
    const Positions x0 = gen.positions(gen.integer(1, 8), gen.uniform(0.1, 5.0));
    const Positions eps = gen.positions(static_cast<int>(x0.rows()));
    const Positions back = t0_estimate(forward_diffuse(x0, t, eps, s), eps, t, s);
    CHECK((back - x0).norm() <= 1e-9 * std::max(1.0, x0.norm()));
  }
}

TEST_CASE("property: posterior mean with the true noise moves toward the previous marginal") {
  const NoiseSchedule s = test::constant_schedule(50, 0.05);
  test::Gen gen(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = gen.integer(2, 50);
    const double x0 = gen.uniform(-3, 3);
    const double eps = gen.normal();
    const double xt = forward_diffuse(x0, t, eps, s);
    const double mean = posterior_mean(xt, eps, t, s);
    CHECK(std::abs(mean - s.alpha(t - 1) * x0) <= std::abs(xt - s.alpha(t) * x0) + 1e-12);
  }
}

TEST_CASE("projection coefficients") {
  const NoiseSchedule s = test::constant_schedule(3, 0.1);
  const ProjectionCoeffs pc = projection_coeffs(2, s);
  CHECK(pc.signal == Approx(std::sqrt(0.9)).epsilon(1e-14));
  CHECK(pc.noise == Approx(std::sqrt(0.1)).epsilon(1e-12));
  CHECK(pc.signal == Approx(0.948683).epsilon(1e-6));
  CHECK(pc.noise == Approx(0.316228).epsilon(1e-6));
}

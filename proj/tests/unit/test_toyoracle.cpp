#include "doctest.h"
#include "support.hpp"

#include "ogd/testbed.hpp"
#include "ogd/toyoracle.hpp"

#include <cmath>

using namespace ogd;
using doctest::Approx;

namespace {

Positions pair_at(double d) {
  Positions p = Positions::Zero(2, 3);
  p(0, 0) = -0.5 * d;
  p(1, 0) = 0.5 * d;
  return p;
}

ToyPotential harmonic_pair() { return ToyPotential(2, {{0, 1, 1.0, 1.0}}); }

// Five atoms: a bonded chain plus LJ between the remaining pairs.
ToyPotential chain5() {
  return ToyPotential(5, {{0, 1, 2.0, 1.0}, {1, 2, 1.5, 1.1}, {2, 3, 3.0, 0.9}, {3, 4, 1.0, 1.2}},
                      LennardJones{0.3, 1.0, 10.0});
}

Positions central_difference(const std::function<double(const Positions&)>& f, const Positions& x, double h) {
  Positions g(x.rows(), 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Positions p = x, m = x;
    p.data()[i] += h;
    m.data()[i] -= h;
    g.data()[i] = (f(p) - f(m)) / (2 * h);
  }
  return g;
}

double rel_err(const Positions& a, const Positions& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST_CASE("harmonic pair energy and gradient") {
  const OracleEval ev = evaluate(harmonic_pair(), pair_at(2.0));
  REQUIRE(ev.converged);
  CHECK(ev.energy == Approx(0.5).epsilon(1e-15));
  CHECK(ev.gradient.row(0).norm() == Approx(1.0).epsilon(1e-15));
  CHECK(ev.gradient(0, 0) == Approx(-1.0).epsilon(1e-15));  // dE/dx pulls atom 0 toward atom 1
  CHECK(ev.gradient(1, 0) == Approx(1.0).epsilon(1e-15));
  CHECK(scalarize(ev) == Approx(std::sqrt(2.0 / 6.0)).epsilon(1e-15));
  CHECK(scalarize(ev) == Approx(0.577350).epsilon(1e-6));

  const OracleEval rest = evaluate(harmonic_pair(), pair_at(1.0));
  CHECK(rest.energy == 0.0);
  CHECK(rest.gradient.isZero(0.0));
}

TEST_CASE("LJ pair at the minimum") {
  const double rmin = std::pow(2.0, 1.0 / 6.0) * 1.3;
  const OracleEval ev = evaluate(ToyPotential(2, {}, LennardJones{0.7, 1.3, 5.0}), pair_at(rmin));
  REQUIRE(ev.converged);
  CHECK(ev.energy == Approx(-0.7).epsilon(1e-14));
  CHECK(ev.gradient.cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("LJ respects the hard cutoff and bonded exclusions") {
  const ToyPotential pot(2, {}, LennardJones{1.0, 1.0, 2.5});
  CHECK(evaluate(pot, pair_at(2.49)).energy < 0.0);
  CHECK(evaluate(pot, pair_at(2.51)).energy == 0.0);
  const ToyPotential bonded(2, {{0, 1, 1.0, 1.0}}, LennardJones{1.0, 1.0, 2.5});
  CHECK(evaluate(bonded, pair_at(2.0)).energy == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("scalarizations") {
  OracleEval ev;
  ev.converged = true;
  ev.gradient = Positions::Zero(1, 3);
  CHECK(scalarize(ev) == 0.0);
  ev.gradient << 3, 4, 0;
  CHECK(scalarize(ev) == Approx(std::sqrt(25.0 / 3.0)).epsilon(1e-15));
  CHECK(scalarize(ev) == Approx(2.886751).epsilon(1e-6));
  CHECK(scalarize(ev, Scalarization::mean_norm) == Approx(5.0).epsilon(1e-15));
  ev.converged = false;
  CHECK(scalarize(ev) == 0.0);
  CHECK(parse_scalarization("mean-norm") == Scalarization::mean_norm);
  CHECK(to_string(Scalarization::rms) == "rms");
  CHECK_THROWS_AS(parse_scalarization("max"), InvalidParameter);
}

TEST_CASE("coincident and non-finite inputs fail softly") {
  const ToyPotential pot = chain5();
  Positions p = test::Gen(41).spread_out(5, 2.0, 0.8);
  p.row(3) = p.row(0);
  OracleEval ev = evaluate(pot, p);
  CHECK_FALSE(ev.converged);
  CHECK(ev.gradient.isZero(0.0));
  CHECK(ev.gradient.rows() == 5);
  p(0, 0) = std::nan("");
  ev = evaluate(pot, p);
  CHECK_FALSE(ev.converged);
  CHECK(ev.gradient.isZero(0.0));
  CHECK_THROWS_AS(evaluate(pot, Positions::Zero(4, 3)), ShapeMismatch);
}

TEST_CASE("invalid potentials are rejected") {
  CHECK_THROWS_AS(ToyPotential(0, {}), InvalidParameter);
  CHECK_THROWS_AS(ToyPotential(2, {{0, 0, 1.0, 1.0}}), InvalidParameter);
  CHECK_THROWS_AS(ToyPotential(2, {{0, 2, 1.0, 1.0}}), InvalidParameter);
  CHECK_THROWS_AS(ToyPotential(2, {{0, 1, 0.0, 1.0}}), InvalidParameter);
  CHECK_THROWS_AS(ToyPotential(2, {}, LennardJones{1.0, 0.0, 2.5}), InvalidParameter);
}

TEST_CASE("property: analytic gradient matches central differences") {
  const ToyPotential pot = chain5();
  test::Gen gen(42);
  for (int trial = 0; trial < 100; ++trial) {
    const Positions x = gen.spread_out(5, 1.5, 0.8);
    const OracleEval ev = evaluate(pot, x);
    REQUIRE(ev.converged);
    const Positions fd = central_difference([&](const Positions& p) { return evaluate(pot, p).energy; }, x, 1e-6);
    CHECK(rel_err(ev.gradient, fd) < 1e-5);
  }
}

TEST_CASE("property: invariances of the potential") {
  const ToyPotential pot = chain5();
  test::Gen gen(43);
  for (int trial = 0; trial < 50; ++trial) {
    const Positions x = gen.spread_out(5, 1.5, 0.8);
    const OracleEval ev = evaluate(pot, x);
    const Eigen::RowVector3d shift(gen.uniform(-5, 5), gen.uniform(-5, 5), gen.uniform(-5, 5));
    const Positions moved = x.rowwise() + shift;
    CHECK(std::abs(evaluate(pot, moved).energy - ev.energy) <= 1e-10 * std::max(1.0, std::abs(ev.energy)));
    const Rotation r = gen.rotation();
    const OracleEval rot = evaluate(pot, Positions(x * r.transpose()));
    CHECK(std::abs(rot.energy - ev.energy) <= 1e-10 * std::max(1.0, std::abs(ev.energy)));
    CHECK(test::max_abs_diff(rot.gradient, Positions(ev.gradient * r.transpose())) <= 1e-10 * std::max(1.0, ev.gradient.norm()));
    CHECK(ev.gradient.colwise().sum().cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, ev.gradient.norm()));
  }
}

TEST_CASE("property: Hessian-vector products and the force-RMS gradient match differences") {
  const ToyPotential pot = chain5();
  test::Gen gen(44);
  for (int trial = 0; trial < 30; ++trial) {
    const Positions x = gen.spread_out(5, 1.5, 0.8);
    const Positions v = gen.positions(5);
    const double h = 1e-6;
    const Positions fd = (evaluate(pot, Positions(x + h * v)).gradient - evaluate(pot, Positions(x - h * v)).gradient) / (2 * h);
    CHECK(rel_err(hessian_vector_product(pot, x, v), fd) < 1e-5);

    const Positions fdo = central_difference([&](const Positions& p) { return objective(pot, p); }, x, 1e-6);
    CHECK(rel_err(objective_gradient(pot, x), fdo) < 1e-5);
  }
}

TEST_CASE("relaxation of a harmonic pair") {
  const RelaxResult r = relax(harmonic_pair(), pair_at(2.0));
  CHECK(r.converged);
  CHECK((r.positions.row(0) - r.positions.row(1)).norm() == Approx(1.0).epsilon(1e-4));
  CHECK(r.energy < 1e-8);
  CHECK(max_abs_column_mean(r.positions) <= 1e-12);
}

TEST_CASE("relaxation from the minimum does not move") {
  const RelaxResult r = relax(harmonic_pair(), pair_at(1.0));
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.positions == pair_at(1.0));
}

TEST_CASE("property: relaxation descends monotonically") {
  const ToyPotential lj(4, {}, LennardJones{1.0, 1.0, 2.5});
  test::Gen gen(45);
  for (int trial = 0; trial < 20; ++trial) {
    const Positions x = gen.spread_out(4, 1.0, 0.9);
    const RelaxResult r = relax(lj, x);
    REQUIRE_FALSE(r.energy_trace.empty());
    for (std::size_t k = 1; k < r.energy_trace.size(); ++k) CHECK(r.energy_trace[k] <= r.energy_trace[k - 1]);
    CHECK(r.converged);
    CHECK(r.force_rms < RelaxOptions{}.tol);
    CHECK(r.energy <= evaluate(lj, x).energy + 1e-12);
  }
}

TEST_CASE("relaxation reports divergence") {
  RelaxOptions opts;
  opts.max_failures = 3;
  opts.initial_step = 10.0;  // every trial overshoots by far more than three halvings fix
  const RelaxResult r = relax(ToyPotential(2, {{0, 1, 100.0, 1.0}}), pair_at(2.0), opts);
  CHECK_FALSE(r.converged);
  CHECK(r.energy == Approx(50.0));

  opts = {};
  opts.max_iters = 2;
  CHECK_FALSE(relax(chain5(), test::Gen(46).spread_out(5, 1.5, 0.8), opts).converged);

  Positions bad = pair_at(2.0);
  bad(0, 0) = std::nan("");
  CHECK_FALSE(relax(harmonic_pair(), bad).converged);
}

TEST_CASE("radius of gyration property") {
  Positions p = pair_at(2.0);
  const PropertyEval rg = surrogate_property(PointState(p));
  CHECK(rg.value == Approx(1.0).epsilon(1e-15));
  CHECK(rg.gradient(0, 0) == Approx(-0.5).epsilon(1e-15));
  CHECK(rg.gradient(1, 0) == Approx(0.5).epsilon(1e-15));
  CHECK(rg.gradient.row(0).tail(2).isZero(0.0));

  const PropertyEval zero = surrogate_property(PointState::zeros(3));
  CHECK(zero.value == 0.0);
  CHECK(zero.gradient.isZero(0.0));

  test::Gen gen(47);
  const PointState x = gen.state(6);
  CHECK(surrogate_property(PointState(Positions(2.5 * x.positions))).value ==
        Approx(2.5 * surrogate_property(x).value).epsilon(1e-14));
  const Positions fd = central_difference(
      [](const Positions& q) { return surrogate_property(PointState(q, {}, false)).value; }, x.positions, 1e-6);
  CHECK(rel_err(surrogate_property(x).gradient, fd) < 1e-7);
}

TEST_CASE("oracle adapters") {
  auto toy = std::make_shared<ToyOracle>(harmonic_pair());
  CountingOracle counted(toy);
  CHECK(counted.evaluate(pair_at(2.0)).energy == Approx(0.5));
  CHECK(counted.evaluate(pair_at(1.0)).energy == 0.0);
  CHECK(counted.calls() == 2);
  CHECK(counted.relax(pair_at(2.0), {}).has_value());
  CHECK(counted.calls() == 2);
  counted.reset();
  CHECK(counted.calls() == 0);
  CHECK_FALSE(toy->describe().empty());
}

TEST_CASE("ring testbed") {
  const Testbed tb = ring_testbed();
  CHECK(tb.potential.n_atoms() == 4);
  CHECK(tb.potential.bonds().size() == 4);
  CHECK(tb.potential.is_bonded(0, 3));
  CHECK_FALSE(tb.potential.is_bonded(0, 2));
  const OracleEval at_min = evaluate(tb.potential, tb.relaxed.positions);
  CHECK(at_min.converged);
  CHECK(scalarize(at_min) < 1e-9);
  CHECK(max_abs_column_mean(tb.target_mean.positions) <= 1e-12);
  // The target is a stretched ring: its edges exceed the bond rest length.
  CHECK((tb.target_mean.positions.row(0) - tb.target_mean.positions.row(1)).norm() == Approx(1.3).epsilon(1e-12));
  CHECK(scalarize(evaluate(tb.potential, tb.target_mean.positions)) > 1.0);
  CHECK(tb.relaxed_rg == Approx(surrogate_property(tb.relaxed).value));
}

#pragma once

#include "ogd/geomstate.hpp"
#include "ogd/schedule.hpp"

#include <cstdint>
#include <random>

namespace ogd::test {

// Small hand-rolled generators for the property tests.
struct Gen {
  std::mt19937_64 engine;
  explicit Gen(std::uint64_t seed) : engine(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }
  double normal() { return std::normal_distribution<double>()(engine); }

  Positions positions(int n, double spread = 1.0) {
    Positions p(n, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = spread * normal();
    return p;
  }
  Positions centered(int n, double spread = 1.0) { return project_zero_cog(positions(n, spread)); }

  // Random configuration with every pair at least `min_dist` apart.
  Positions spread_out(int n, double box, double min_dist) {
    for (;;) {
      Positions p(n, 3);
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = uniform(-box, box);
      bool ok = true;
      for (int i = 0; i < n && ok; ++i)
        for (int j = i + 1; j < n && ok; ++j) ok = (p.row(i) - p.row(j)).norm() > min_dist;
      if (ok) return project_zero_cog(p);
    }
  }

  PointState state(int n, int d = 0) {
    Features f(n, d);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = normal();
    return PointState(centered(n), f);
  }

  Rotation rotation() { return random_rotation(engine); }
};

inline NoiseSchedule constant_schedule(int steps, double beta) {
  ScheduleSpec spec;
  spec.kind = ScheduleKind::constant;
  spec.steps = steps;
  spec.beta_start = beta;
  return build_schedule(spec);
}

inline double max_abs_diff(const Positions& a, const Positions& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace ogd::test

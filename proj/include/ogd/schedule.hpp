#pragma once

#include "ogd/types.hpp"

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace ogd {

enum class ScheduleKind { constant, linear, polynomial };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string to_string(ScheduleKind kind);

/// Parameters for build_schedule. `constant` uses beta_start only; `polynomial`
/// interpolates beta_start..beta_end along ((t-1)/(T-1))^power.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::linear;
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double power = 2.0;
};

/// Precomputed diffusion tables. Indexing follows the 1-based step convention:
/// beta(t) and sigma(t) for t in [1, T], alpha(t) for t in [0, T] with alpha(0) = 1.
/// Immutable once built.
class NoiseSchedule {
 public:
  static NoiseSchedule build(const ScheduleSpec& spec);

  int steps() const { return static_cast<int>(betas_.size()); }
  const ScheduleSpec& spec() const { return spec_; }

  double beta(int t) const;
  double alpha(int t) const;
  double sigma(int t) const;
  /// sqrt(1 - alpha_t^2), the noise coefficient of the reparametrized forward process.
  double noise_level(int t) const;

  std::span<const double> betas() const { return betas_; }
  std::span<const double> alphas() const { return alphas_; }
  std::span<const double> sigmas() const { return sigmas_; }

  void check_step(int t) const;

 private:
  NoiseSchedule() = default;

  ScheduleSpec spec_;
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> sigmas_;
  std::vector<double> noise_levels_;
};

NoiseSchedule build_schedule(const ScheduleSpec& spec);

namespace detail {

template <class T>
void check_same_shape(const T& a, const T& b) {
  if constexpr (!std::is_arithmetic_v<T>) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw ShapeMismatch("tensor shapes differ: " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
    }
  }
}

}  // namespace detail

// The tensor operations below accept scalars or any plain Eigen matrix type.

/// x_t = alpha_t x0 + sqrt(1 - alpha_t^2) eps
template <class T>
T forward_diffuse(const T& x0, int t, const T& eps, const NoiseSchedule& sched) {
  sched.check_step(t);
  detail::check_same_shape(x0, eps);
  return T(sched.alpha(t) * x0 + sched.noise_level(t) * eps);
}

/// Mean of the reverse step: (x_t - beta_t / sqrt(1 - alpha_t^2) * eps) / sqrt(1 - beta_t).
template <class T>
T posterior_mean(const T& xt, const T& eps_pred, int t, const NoiseSchedule& sched) {
  sched.check_step(t);
  detail::check_same_shape(xt, eps_pred);
  const double b = sched.beta(t);
  return T((xt - (b / sched.noise_level(t)) * eps_pred) / std::sqrt(1.0 - b));
}

/// One-step denoised estimate of x_0 from x_t.
template <class T>
T t0_estimate(const T& xt, const T& eps_pred, int t, const NoiseSchedule& sched) {
  sched.check_step(t);
  detail::check_same_shape(xt, eps_pred);
  return T((xt - sched.noise_level(t) * eps_pred) / sched.alpha(t));
}

/// Coefficients (a, b) of the forward projection z_t = a z_{t-1} + b eps used to move a
/// sample from step t-1 back to step t.
struct ProjectionCoeffs {
  double signal;
  double noise;
};

ProjectionCoeffs projection_coeffs(int t, const NoiseSchedule& sched);

}  // namespace ogd

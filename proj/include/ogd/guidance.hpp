#pragma once

#include "ogd/denoiser.hpp"
#include "ogd/geomstate.hpp"
#include "ogd/schedule.hpp"
#include "ogd/toyoracle.hpp"

#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace ogd {

struct GuidanceConfig {
  double scale = 0.0;           // s: oracle scale, or the property scale in noisy/clean modes
  double property_scale = 0.0;  // s_r: property scale of the bilevel modes
  double zeta = 1e-6;
  int window = 400;             // guide steps t <= window
  int skip = 1;                 // ... every skip-th of them, the last of each block of `skip`
  int clean_steps = 1;          // K
  double clean_lr = 0.1;
  double target = 0.0;          // y
  Scalarization scalarization = Scalarization::rms;
  int probes = 1;               // SPSA probe pairs averaged per guidance step
  std::optional<double> max_norm;
  bool center_perturbation = true;

  void validate(int total_steps) const;
  /// t <= window and (window - t + 1) % skip == 0, so skip > window disables guidance.
  bool active_at(int t) const { return t >= 1 && t <= window && (window - t + 1) % skip == 0; }
  /// Number of guided steps, floor(window / skip).
  int guided_step_count() const { return window <= 0 ? 0 : window / skip; }
};

struct ObjectiveValue {
  double value = 0.0;
  bool valid = false;
};

/// Black-box scalar objective of a state (the oracle composition F).
using StateObjective = std::function<ObjectiveValue(const PointState&)>;

/// Central-difference directional derivative (F(x + zeta U) - F(x - zeta U)) / (2 zeta).
/// Empty when either probe is invalid. Only the positions block is perturbed.
std::optional<double> spsa_directional(const PointState& state, const StateObjective& objective,
                                       const Positions& perturbation, double zeta);

/// SPSA estimate of -grad ||y - F||^2, i.e. 2 (y - F(x)) * mean_probes(d * U).
/// All-zeros when any oracle call is invalid. Positions only.
Positions spsa_oracle_gradient(const PointState& state, const StateObjective& objective,
                               const GuidanceConfig& cfg, NoiseStream& rng);

/// Same estimate with caller-provided perturbations (one per probe).
Positions spsa_oracle_gradient(const PointState& state, const StateObjective& objective,
                               const GuidanceConfig& cfg, const std::vector<Positions>& perturbations);

/// Exact -grad_{x_t} ||y - P(D(t0(x_t)))||^2 for a property with analytic gradient.
Positions noisy_guidance_gradient(const PointState& state, int t, const Denoiser& denoiser,
                                  const Decoder& decoder, const Property& property,
                                  const GuidanceConfig& cfg, const NoiseSchedule& sched);

struct CleanDelta {
  Positions delta;
  std::vector<double> loss_trace;  // loss before each descent step
};

/// K gradient-descent steps on Delta -> ||y - P(D(x0_hat + Delta))||^2 from Delta = 0.
CleanDelta clean_guidance_delta(const PointState& state, int t, const Denoiser& denoiser,
                                const Decoder& decoder, const Property& property,
                                const GuidanceConfig& cfg, const NoiseSchedule& sched);

/// Returns (x_t, eps_tilde) with eps_tilde = eps - alpha/sqrt(1-alpha^2) delta and
/// x_t = alpha (x0_hat + delta) + sqrt(1-alpha^2) eps_tilde.
template <class T>
std::pair<T, T> clean_recompose(const T& x_hat0, const T& delta, const T& eps_pred, int t,
                                const NoiseSchedule& sched) {
  sched.check_step(t);
  detail::check_same_shape(x_hat0, delta);
  detail::check_same_shape(x_hat0, eps_pred);
  const double a = sched.alpha(t);
  const double n = sched.noise_level(t);
  T eps_tilde = eps_pred - (a / n) * delta;
  T xt = a * (x_hat0 + delta) + n * eps_tilde;
  return {std::move(xt), std::move(eps_tilde)};
}

/// Caps the Frobenius norm of a guidance gradient.
Positions cap_norm(Positions g, std::optional<double> max_norm);

}  // namespace ogd

#include "ogd/guidance.hpp"

#include <cmath>

namespace ogd {

void GuidanceConfig::validate(int total_steps) const {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidParameter("guidance scale must be >= 0");
  if (!(property_scale >= 0.0) || !std::isfinite(property_scale)) throw InvalidParameter("property scale must be >= 0");
  if (!(zeta > 0.0)) throw InvalidParameter("zeta must be > 0");
  if (skip < 1) throw InvalidParameter("skip must be >= 1");
  if (window < 0 || window > total_steps) throw InvalidParameter("window must lie in [0, T]");
  if (clean_steps < 1) throw InvalidParameter("clean_steps must be >= 1");
  if (!(clean_lr >= 0.0)) throw InvalidParameter("clean_lr must be >= 0");
  if (probes < 1) throw InvalidParameter("probes must be >= 1");
  if (max_norm && !(*max_norm > 0.0)) throw InvalidParameter("max_norm must be > 0");
}

std::optional<double> spsa_directional(const PointState& state, const StateObjective& objective,
                                       const Positions& perturbation, double zeta) {
  PointState plus = state;
  plus.positions += zeta * perturbation;
  const ObjectiveValue fp = objective(plus);
  PointState minus = state;
  minus.positions -= zeta * perturbation;
  const ObjectiveValue fm = objective(minus);
  if (!fp.valid || !fm.valid) return std::nullopt;
  return (fp.value - fm.value) / (2.0 * zeta);
}

Positions cap_norm(Positions g, std::optional<double> max_norm) {
  if (max_norm) {
    const double norm = g.norm();
    if (norm > *max_norm) g *= *max_norm / norm;
  }
  return g;
}

Positions spsa_oracle_gradient(const PointState& state, const StateObjective& objective,
                               const GuidanceConfig& cfg, const std::vector<Positions>& perturbations) {
  const Positions zero = Positions::Zero(state.n_atoms(), 3);
  if (perturbations.empty()) return zero;

  const ObjectiveValue base = objective(state);
  if (!base.valid) return zero;

  Positions estimate = zero;
  for (const auto& u : perturbations) {
    const auto d = spsa_directional(state, objective, u, cfg.zeta);
    if (!d) return zero;
    estimate += *d * u;
  }
  estimate /= static_cast<double>(perturbations.size());
  return cap_norm(2.0 * (cfg.target - base.value) * estimate, cfg.max_norm);
}

Positions spsa_oracle_gradient(const PointState& state, const StateObjective& objective,
                               const GuidanceConfig& cfg, NoiseStream& rng) {
  std::vector<Positions> perturbations;
  perturbations.reserve(static_cast<std::size_t>(cfg.probes));
  for (int p = 0; p < cfg.probes; ++p) {
    perturbations.push_back(sample_perturbation(state.n_atoms(), rng, cfg.center_perturbation));
  }
  return spsa_oracle_gradient(state, objective, cfg, perturbations);
}

Positions noisy_guidance_gradient(const PointState& state, int t, const Denoiser& denoiser,
                                  const Decoder& decoder, const Property& property,
                                  const GuidanceConfig& cfg, const NoiseSchedule& sched) {
  const PointState eps = denoiser.predict_noise(state, t, sched);
  const PointState x0_hat = t0_estimate(state, eps, t, sched);
  const PropertyEval prop = property(decoder.decode(x0_hat));

  // Cotangent on x0_hat, then through d x0_hat / d x_t = (I - sqrt(1-a^2) d eps/dx) / a.
  const Positions w = decoder.pullback(x0_hat, prop.gradient);
  const Positions pulled =
      (w - sched.noise_level(t) * denoiser.noise_vjp(state, t, sched, w)) / sched.alpha(t);
  return cap_norm(2.0 * (cfg.target - prop.value) * pulled, cfg.max_norm);
}

CleanDelta clean_guidance_delta(const PointState& state, int t, const Denoiser& denoiser,
                                const Decoder& decoder, const Property& property,
                                const GuidanceConfig& cfg, const NoiseSchedule& sched) {
  if (cfg.clean_steps < 1) throw InvalidParameter("clean_steps must be >= 1");
  const PointState eps = denoiser.predict_noise(state, t, sched);
  const PointState x0_hat = t0_estimate(state, eps, t, sched);

  CleanDelta out;
  out.delta = Positions::Zero(state.n_atoms(), 3);
  out.loss_trace.reserve(static_cast<std::size_t>(cfg.clean_steps));
  PointState shifted = x0_hat;
  for (int k = 0; k < cfg.clean_steps; ++k) {
    shifted.positions = x0_hat.positions + out.delta;
    const PropertyEval prop = property(decoder.decode(shifted));
    const double residual = cfg.target - prop.value;
    out.loss_trace.push_back(residual * residual);
    const Positions grad = -2.0 * residual * decoder.pullback(shifted, prop.gradient);
    out.delta -= cfg.clean_lr * grad;
  }
  return out;
}

}  // namespace ogd

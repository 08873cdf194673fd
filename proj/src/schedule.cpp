#include "ogd/schedule.hpp"

#include <cmath>

namespace ogd {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "linear") return ScheduleKind::linear;
  if (name == "polynomial") return ScheduleKind::polynomial;
  throw InvalidParameter("unknown schedule kind '" + std::string(name) + "'");
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::constant:
      return "constant";
    case ScheduleKind::linear:
      return "linear";
    case ScheduleKind::polynomial:
      return "polynomial";
  }
  return "unknown";
}

namespace {

bool in_open_unit(double b) { return std::isfinite(b) && b > 0.0 && b < 1.0; }

std::vector<double> make_betas(const ScheduleSpec& spec) {
  const int T = spec.steps;
  std::vector<double> betas(static_cast<std::size_t>(T));
  switch (spec.kind) {
    case ScheduleKind::constant:
      if (!in_open_unit(spec.beta_start)) throw InvalidParameter("constant schedule needs 0 < beta < 1");
      for (auto& b : betas) b = spec.beta_start;
      break;
    case ScheduleKind::linear:
    case ScheduleKind::polynomial: {
      if (!in_open_unit(spec.beta_start) || !in_open_unit(spec.beta_end) ||
          spec.beta_start > spec.beta_end) {
        throw InvalidParameter("schedule needs 0 < beta_start <= beta_end < 1");
      }
      const double power = spec.kind == ScheduleKind::linear ? 1.0 : spec.power;
      if (!(power > 0.0)) throw InvalidParameter("polynomial schedule needs power > 0");
      for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        betas[t - 1] = spec.beta_start + (spec.beta_end - spec.beta_start) * std::pow(frac, power);
      }
      break;
    }
  }
  return betas;
}

}  // namespace

NoiseSchedule NoiseSchedule::build(const ScheduleSpec& spec) {
  if (spec.steps < 1) throw InvalidParameter("schedule needs at least one step");

  NoiseSchedule s;
  s.spec_ = spec;
  s.betas_ = make_betas(spec);

  const auto T = static_cast<std::size_t>(spec.steps);
  s.alphas_.resize(T + 1);
  s.sigmas_.resize(T);
  s.noise_levels_.resize(T + 1);

  double cumulative = 1.0;
  s.alphas_[0] = 1.0;
  s.noise_levels_[0] = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    cumulative *= 1.0 - s.betas_[t - 1];
    s.alphas_[t] = std::sqrt(cumulative);
    s.noise_levels_[t] = std::sqrt(1.0 - cumulative);
  }
  if (!(s.alphas_[T] > 0.0)) throw InvalidParameter("schedule drives alpha_T to zero");

  for (std::size_t t = 1; t <= T; ++t) {
    const double prev = s.alphas_[t - 1] * s.alphas_[t - 1];
    const double cur = s.alphas_[t] * s.alphas_[t];
    s.sigmas_[t - 1] = std::sqrt((1.0 - prev) / (1.0 - cur) * s.betas_[t - 1]);
  }
  return s;
}

NoiseSchedule build_schedule(const ScheduleSpec& spec) { return NoiseSchedule::build(spec); }

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) throw StepOutOfRange(t, 1, steps());
}

double NoiseSchedule::beta(int t) const {
  check_step(t);
  return betas_[t - 1];
}

double NoiseSchedule::alpha(int t) const {
  if (t < 0 || t > steps()) throw StepOutOfRange(t, 0, steps());
  return alphas_[t];
}

double NoiseSchedule::sigma(int t) const {
  check_step(t);
  return sigmas_[t - 1];
}

double NoiseSchedule::noise_level(int t) const {
  if (t < 0 || t > steps()) throw StepOutOfRange(t, 0, steps());
  return noise_levels_[t];
}

ProjectionCoeffs projection_coeffs(int t, const NoiseSchedule& sched) {
  sched.check_step(t);
  const double ratio = sched.alpha(t) / sched.alpha(t - 1);
  return {ratio, std::sqrt(1.0 - ratio * ratio)};
}

}  // namespace ogd

#include "ogd/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace ogd {

Mode parse_mode(const std::string& name) {
  if (name == "unguided") return Mode::unguided;
  if (name == "oracle") return Mode::oracle;
  if (name == "noisy") return Mode::noisy;
  if (name == "clean") return Mode::clean;
  if (name == "bilevel-noisy") return Mode::bilevel_noisy;
  if (name == "bilevel-clean") return Mode::bilevel_clean;
  if (name == "evolutionary") return Mode::evolutionary;
  throw InvalidParameter("unknown mode '" + name + "'");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::unguided: return "unguided";
    case Mode::oracle: return "oracle";
    case Mode::noisy: return "noisy";
    case Mode::clean: return "clean";
    case Mode::bilevel_noisy: return "bilevel-noisy";
    case Mode::bilevel_clean: return "bilevel-clean";
    case Mode::evolutionary: return "evolutionary";
  }
  return "unknown";
}

void EvoConfig::validate() const {
  if (variant_size < 1) throw InvalidParameter("variant_size must be >= 1");
  if (interval < 1) throw InvalidParameter("evolution interval must be >= 1");
  if (!(variant_scale > 0.0)) throw InvalidParameter("variant_scale must be > 0");
}

void RunConfig::validate() const {
  if (n_samples < 1) throw InvalidParameter("n_samples must be >= 1");
  if (n_atoms < 1) throw InvalidParameter("n_atoms must be >= 1");
  if (feature_dim < 0) throw InvalidParameter("feature_dim must be >= 0");
  if (jobs < 1) throw InvalidParameter("jobs must be >= 1");
  if (!schedule) throw InvalidParameter("run needs a noise schedule");
  if (!denoiser) throw InvalidParameter("run needs a denoiser");
  guidance.validate(schedule->steps());
  const bool needs_oracle = mode == Mode::oracle || mode == Mode::bilevel_noisy ||
                            mode == Mode::bilevel_clean || mode == Mode::evolutionary;
  if (needs_oracle && !oracle) throw InvalidParameter("mode " + to_string(mode) + " needs an oracle");
  if (mode == Mode::evolutionary) {
    if (!evo) throw InvalidParameter("evolutionary mode needs an evo config");
    evo->validate();
  }
}

const Decoder& RunConfig::decoder_ref() const { return decoder ? *decoder : *identity_decoder(); }

Property RunConfig::property_or_default() const { return property ? property : Property(surrogate_property); }

StateObjective oracle_objective(const RunConfig& cfg, int t) {
  return [&cfg, t](const PointState& z) -> ObjectiveValue {
    if (!z.positions.allFinite() || !z.features.allFinite()) return {};
    const NoiseSchedule& sched = *cfg.schedule;
    const PointState x0 = t == 0 ? z : t0_estimate(z, cfg.denoiser->predict_noise(z, t, sched), t, sched);
    const OracleEval ev = cfg.oracle->evaluate(cfg.decoder_ref().decode(x0).positions);
    if (!ev.converged) return {};
    return {scalarize(ev, cfg.guidance.scalarization), true};
  };
}

StateObjective clean_oracle_objective(const RunConfig& cfg) { return oracle_objective(cfg, 0); }

std::size_t select_best_variant(std::span<const double> objectives) {
  if (objectives.empty()) throw InvalidParameter("selection over an empty population");
  std::size_t best = 0;
  for (std::size_t i = 1; i < objectives.size(); ++i) {
    if (objectives[i] < objectives[best]) best = i;
  }
  return best;
}

namespace {

bool finite(const PointState& s) { return s.positions.allFinite() && s.features.allFinite(); }

void recenter(PointState& s) {
  if (s.cog_constrained) s.positions.rowwise() -= s.positions.colwise().mean().eval();
}

// Draws x_{t-1} ~ N(mean, sigma^2 I); the mean is re-centred first.
PointState ancestral_step(PointState mean, double sigma, NoiseStream& noise) {
  recenter(mean);
  const PointState e = sample_noise_like(mean, noise);
  mean.positions += sigma * e.positions;
  mean.features += sigma * e.features;
  return mean;
}

class ChainRunner {
 public:
  ChainRunner(const RunConfig& cfg, NoiseStream& diffusion, NoiseStream& guidance)
      : cfg_(cfg),
        sched_(*cfg.schedule),
        denoiser_(*cfg.denoiser),
        decoder_(cfg.decoder_ref()),
        property_(cfg.property_or_default()),
        g_(cfg.guidance),
        diffusion_(diffusion),
        guidance_(guidance) {}

  PointState run(const StepObserver& observer, int chain) {
    PointState x;
    x.cog_constrained = true;
    x.positions = sample_perturbation(cfg_.n_atoms, diffusion_, true);
    x.features = diffusion_.features(cfg_.n_atoms, cfg_.feature_dim);
    if (observer) observer(chain, sched_.steps(), x);

    for (int t = sched_.steps(); t >= 1; --t) {
      x = step(x, t);
      if (!finite(x)) break;
      if (observer) observer(chain, t - 1, x);
    }
    return x;
  }

 private:
  PointState step(const PointState& x, int t) {
    const bool guided = g_.active_at(t);
    switch (cfg_.mode) {
      case Mode::unguided:
        return plain_step(x, t);
      case Mode::oracle:
        return guided && g_.scale > 0.0 ? oracle_step(x, t) : plain_step(x, t);
      case Mode::noisy:
        return guided && g_.scale > 0.0 ? noisy_step(x, t, g_.scale) : plain_step(x, t);
      case Mode::clean:
        return guided && g_.scale > 0.0 ? clean_step(x, t) : plain_step(x, t);
      case Mode::bilevel_noisy:
        return guided ? bilevel_noisy_step(x, t) : plain_step(x, t);
      case Mode::bilevel_clean:
        return guided ? bilevel_clean_step(x, t) : plain_step(x, t);
      case Mode::evolutionary:
        return evolutionary_step(x, t);
    }
    return plain_step(x, t);
  }

  PointState plain_mean(const PointState& x, int t) const {
    return posterior_mean(x, denoiser_.predict_noise(x, t, sched_), t, sched_);
  }

  PointState plain_step(const PointState& x, int t, NoiseStream* noise = nullptr) {
    return ancestral_step(plain_mean(x, t), sched_.sigma(t), noise ? *noise : diffusion_);
  }

  // s sigma_t^2 g added to the positions of the mean.
  void shift(PointState& mean, int t, double scale, const Positions& g) const {
    const double sigma = sched_.sigma(t);
    mean.positions += scale * sigma * sigma * g;
  }

  PointState oracle_step(const PointState& x, int t) {
    PointState mean = plain_mean(x, t);
    const Positions g = spsa_oracle_gradient(x, oracle_objective(cfg_, t), g_, guidance_);
    shift(mean, t, g_.scale, g);
    return ancestral_step(std::move(mean), sched_.sigma(t), diffusion_);
  }

  PointState noisy_step(const PointState& x, int t, double scale) {
    PointState mean = plain_mean(x, t);
    const Positions g = noisy_guidance_gradient(x, t, denoiser_, decoder_, property_, g_, sched_);
    shift(mean, t, scale, g);
    return ancestral_step(std::move(mean), sched_.sigma(t), diffusion_);
  }

  // Clean-space delta scaled by `scale`, folded into the noise prediction.
  struct CleanStep {
    PointState eps_tilde;
    PointState x0_shifted;
  };

  CleanStep clean_noise(const PointState& x, int t, double scale) const {
    const PointState eps = denoiser_.predict_noise(x, t, sched_);
    const PointState x0_hat = t0_estimate(x, eps, t, sched_);
    CleanStep out{eps, x0_hat};
    if (scale > 0.0) {
      const Positions delta = scale * clean_guidance_delta(x, t, denoiser_, decoder_, property_, g_, sched_).delta;
      out.eps_tilde.positions = clean_recompose(x0_hat.positions, delta, eps.positions, t, sched_).second;
      out.x0_shifted.positions += delta;
    }
    return out;
  }

  PointState clean_step(const PointState& x, int t) {
    const CleanStep c = clean_noise(x, t, g_.scale);
    return ancestral_step(posterior_mean(x, c.eps_tilde, t, sched_), sched_.sigma(t), diffusion_);
  }

  PointState bilevel_noisy_step(const PointState& x, int t) {
    // Lower level: property-guided step to z'_{t-1}.
    PointState mean = plain_mean(x, t);
    if (g_.property_scale > 0.0) {
      shift(mean, t, g_.property_scale,
            noisy_guidance_gradient(x, t, denoiser_, decoder_, property_, g_, sched_));
    }
    const PointState lower = ancestral_step(std::move(mean), sched_.sigma(t), diffusion_);

    // Project z'_{t-1} back to step t with fresh forward noise.
    const ProjectionCoeffs pc = projection_coeffs(t, sched_);
    const PointState eps = sample_noise_like(lower, guidance_);
    PointState projected = lower;
    projected.positions = pc.signal * lower.positions + pc.noise * eps.positions;
    projected.features = pc.signal * lower.features + pc.noise * eps.features;
    if (!finite(projected)) return projected;

    // Upper level: oracle guidance on the positions of a fresh step from z'_t.
    PointState upper = plain_mean(projected, t);
    if (g_.scale > 0.0) {
      shift(upper, t, g_.scale, spsa_oracle_gradient(projected, oracle_objective(cfg_, t), g_, guidance_));
    }
    return ancestral_step(std::move(upper), sched_.sigma(t), diffusion_);
  }

  PointState bilevel_clean_step(const PointState& x, int t) {
    const CleanStep c = clean_noise(x, t, g_.property_scale);
    PointState mean = posterior_mean(x, c.eps_tilde, t, sched_);
    if (g_.scale > 0.0) {
      shift(mean, t, g_.scale, spsa_oracle_gradient(c.x0_shifted, clean_oracle_objective(cfg_), g_, guidance_));
    }
    return ancestral_step(std::move(mean), sched_.sigma(t), diffusion_);
  }

  PointState evolutionary_step(const PointState& x, int t) {
    const EvoConfig& evo = *cfg_.evo;
    std::vector<PointState> population{x};
    if (g_.active_at(t) && t % evo.interval == 0) {
      for (int k = 1; k < evo.variant_size; ++k) {
        const PointState e = sample_noise_like(x, guidance_);
        PointState variant = x;
        variant.positions += evo.variant_scale * e.positions;
        variant.features += evo.variant_scale * e.features;
        population.push_back(std::move(variant));
      }
    }
    for (std::size_t i = 0; i < population.size(); ++i) {
      population[i] = plain_step(population[i], t, i == 0 ? &diffusion_ : &guidance_);
    }
    if (population.size() == 1) return std::move(population.front());

    const StateObjective objective = oracle_objective(cfg_, t - 1);
    std::vector<double> values(population.size());
    for (std::size_t i = 0; i < population.size(); ++i) {
      const ObjectiveValue v = objective(population[i]);
      values[i] = v.valid ? v.value * v.value : std::numeric_limits<double>::infinity();
    }
    return std::move(population[select_best_variant(values)]);
  }

  const RunConfig& cfg_;
  const NoiseSchedule& sched_;
  const Denoiser& denoiser_;
  const Decoder& decoder_;
  Property property_;
  const GuidanceConfig& g_;
  NoiseStream& diffusion_;
  NoiseStream& guidance_;
};

}  // namespace

PointState run_chain(const RunConfig& cfg, NoiseStream& diffusion, NoiseStream& guidance,
                     const StepObserver& observer, int chain) {
  cfg.validate();
  return ChainRunner(cfg, diffusion, guidance).run(observer, chain);
}

std::uint64_t diffusion_seed(std::uint64_t seed, int chain) {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(chain));
}

std::uint64_t guidance_seed(std::uint64_t seed, int chain) {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(chain) + 1);
}

std::vector<PointState> sample(const RunConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  std::vector<PointState> out(static_cast<std::size_t>(cfg.n_samples));

  auto work = [&](int worker, int workers) {
    for (int c = worker; c < cfg.n_samples; c += workers) {
      RngNoiseStream diffusion(diffusion_seed(cfg.seed, c));
      RngNoiseStream guidance(guidance_seed(cfg.seed, c));
      out[static_cast<std::size_t>(c)] = ChainRunner(cfg, diffusion, guidance).run(observer, c);
    }
  };

  const int workers = std::min(cfg.jobs, cfg.n_samples);
  if (workers <= 1) {
    work(0, 1);
    return out;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> threads;
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          work(w, workers);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

namespace {

std::vector<PointState> sample_as(RunConfig cfg, Mode mode) {
  cfg.mode = mode;
  return sample(cfg);
}

}  // namespace

std::vector<PointState> sample_unguided(RunConfig cfg) { return sample_as(std::move(cfg), Mode::unguided); }
std::vector<PointState> sample_oracle_guided(RunConfig cfg) { return sample_as(std::move(cfg), Mode::oracle); }
std::vector<PointState> sample_noisy_guided(RunConfig cfg) { return sample_as(std::move(cfg), Mode::noisy); }
std::vector<PointState> sample_clean_guided(RunConfig cfg) { return sample_as(std::move(cfg), Mode::clean); }
std::vector<PointState> sample_bilevel_noisy(RunConfig cfg) { return sample_as(std::move(cfg), Mode::bilevel_noisy); }
std::vector<PointState> sample_bilevel_clean(RunConfig cfg) { return sample_as(std::move(cfg), Mode::bilevel_clean); }
std::vector<PointState> sample_evolutionary(RunConfig cfg) { return sample_as(std::move(cfg), Mode::evolutionary); }

}  // namespace ogd

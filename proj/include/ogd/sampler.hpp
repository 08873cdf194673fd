#pragma once

#include "ogd/denoiser.hpp"
#include "ogd/guidance.hpp"
#include "ogd/schedule.hpp"
#include "ogd/toyoracle.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ogd {

enum class Mode { unguided, oracle, noisy, clean, bilevel_noisy, bilevel_clean, evolutionary };

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

struct EvoConfig {
  int variant_size = 5;       // kappa, unperturbed state included
  int interval = 50;          // E
  double variant_scale = 0.1; // s_v

  void validate() const;
};

struct RunConfig {
  int n_samples = 1;
  int n_atoms = 1;
  int feature_dim = 0;
  std::uint64_t seed = 0;
  int jobs = 1;
  Mode mode = Mode::unguided;

  std::shared_ptr<const NoiseSchedule> schedule;
  std::shared_ptr<const Denoiser> denoiser;
  std::shared_ptr<const Decoder> decoder;  // identity when null
  std::shared_ptr<const Oracle> oracle;
  Property property;                       // radius of gyration when empty

  GuidanceConfig guidance;
  std::optional<EvoConfig> evo;

  void validate() const;
  const Decoder& decoder_ref() const;
  Property property_or_default() const;
};

/// Called with (chain, t, state) for the initial x_T and after every step with x_{t-1}.
using StepObserver = std::function<void(int, int, const PointState&)>;

/// Oracle composition F_t = scalarize(oracle(D(t0(z)))) at step t; at t = 0 the state
/// is already clean and t0 is skipped.
StateObjective oracle_objective(const RunConfig& cfg, int t);

/// Oracle composition for states that are already clean, scalarize(oracle(D(z))).
StateObjective clean_oracle_objective(const RunConfig& cfg);

/// Index of the smallest objective; ties keep the earliest index.
std::size_t select_best_variant(std::span<const double> objectives);

/// Runs one reverse chain drawing the diffusion noise and all guidance randomness from
/// the two given streams. Guided modes never touch `diffusion` beyond what the
/// unguided chain draws (the bilevel and evolutionary extras come from `guidance`).
PointState run_chain(const RunConfig& cfg, NoiseStream& diffusion, NoiseStream& guidance,
                     const StepObserver& observer = {}, int chain = 0);

/// Seeds of the two streams of a chain.
std::uint64_t diffusion_seed(std::uint64_t seed, int chain);
std::uint64_t guidance_seed(std::uint64_t seed, int chain);

/// Runs cfg.n_samples independent chains over cfg.jobs worker threads. The observer is
/// invoked from worker threads.
std::vector<PointState> sample(const RunConfig& cfg, const StepObserver& observer = {});

std::vector<PointState> sample_unguided(RunConfig cfg);
std::vector<PointState> sample_oracle_guided(RunConfig cfg);
std::vector<PointState> sample_noisy_guided(RunConfig cfg);
std::vector<PointState> sample_clean_guided(RunConfig cfg);
std::vector<PointState> sample_bilevel_noisy(RunConfig cfg);
std::vector<PointState> sample_bilevel_clean(RunConfig cfg);
std::vector<PointState> sample_evolutionary(RunConfig cfg);

}  // namespace ogd

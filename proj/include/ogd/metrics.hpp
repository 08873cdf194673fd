#pragma once

#include "ogd/geomstate.hpp"
#include "ogd/guidance.hpp"
#include "ogd/toyoracle.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace ogd {

/// sqrt(sum of squared components / 3N).
double force_rms(const Positions& gradient);

struct EnergyGap {
  double value = 0.0;
  bool relax_converged = false;
};

/// E(x) - E(relax(x)). Throws InvalidParameter when the oracle cannot relax.
EnergyGap energy_above_ground_state(const Positions& positions, const Oracle& oracle, const RelaxOptions& opts = {});

double property_mae(std::span<const double> values, double target);

/// Geometric validity proxy: relaxation converges within `tol` and the smallest
/// inter-atom distance of the input exceeds `min_dist`.
bool toy_validity(const Positions& positions, const Oracle& oracle, double tol, double min_dist,
                  RelaxOptions opts = {});

double min_pair_distance(const Positions& positions);

/// Cosine similarity; NaN when either vector is zero.
double cosine_similarity(const Positions& a, const Positions& b);

struct CosineDiagnostic {
  std::vector<double> per_probe;        // single-probe estimate vs analytic gradient
  std::vector<double> state_cosines;    // probe-averaged estimate vs analytic gradient, per state
  std::vector<double> state_rel_errors; // ||mean - grad|| / ||grad||, per state
  double mean_estimate_cosine = std::numeric_limits<double>::quiet_NaN();  // worst state
  double max_relative_error = std::numeric_limits<double>::quiet_NaN();
  double per_probe_median = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;              // some analytic gradient was zero
};

using GradientSource = std::function<Positions(const PointState&)>;

/// Compares raw SPSA directional estimates d * U against an analytic gradient on each
/// state. Degenerate states (zero analytic gradient) yield NaN cosines and set the flag.
CosineDiagnostic spsa_cosine_diagnostic(const StateObjective& objective, const GradientSource& analytic,
                                        std::span<const PointState> states, int n_probes, double zeta,
                                        NoiseStream& rng, bool center = true);

struct SampleRecord {
  double force_rms = 0.0;
  double energy = 0.0;
  double energy_above_gs = 0.0;
  double property_value = 0.0;
  bool valid = false;
  bool relax_converged = false;
};

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges over [0, max]
  std::vector<long> counts;
};

/// `bins` uniform bins over [0, max(values)]; the top edge is inclusive.
Histogram make_histogram(std::span<const double> values, int bins = 50);

struct Aggregates {
  int n_samples = 0;
  int n_valid = 0;
  double mean_force_rms = 0.0;
  double median_force_rms = 0.0;
  double pooled_force_rms = 0.0;
  double mean_energy_above_gs = 0.0;
  double median_energy_above_gs = 0.0;
  double mean_property = 0.0;
  double property_mae = 0.0;
  Histogram force_rms_hist;
  Histogram energy_above_gs_hist;
};

struct ReportOptions {
  double target = 0.0;
  RelaxOptions relax;
  double validity_tol = 1e-6;
  double min_dist = 0.5;
  bool relax_samples = true;
};

SampleRecord measure_sample(const PointState& decoded, const Oracle& oracle, const Property& property,
                            const ReportOptions& opts);

/// Order-independent aggregates over per-sample records.
Aggregates aggregate(std::span<const SampleRecord> records, double target);

struct SampleReport {
  std::vector<SampleRecord> records;
  Aggregates aggregates;
  std::string mode;
  double scale = 0.0;
  double property_scale = 0.0;
  std::uint64_t seed = 0;
};

double median(std::vector<double> values);

}  // namespace ogd

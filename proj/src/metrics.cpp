#include "ogd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ogd {

double force_rms(const Positions& gradient) {
  if (gradient.size() == 0) return 0.0;
  return std::sqrt(gradient.squaredNorm() / static_cast<double>(gradient.size()));
}

EnergyGap energy_above_ground_state(const Positions& positions, const Oracle& oracle, const RelaxOptions& opts) {
  const OracleEval start = oracle.evaluate(positions);
  const auto relaxed = oracle.relax(positions, opts);
  if (!relaxed) throw InvalidParameter("oracle " + oracle.describe() + " does not support relaxation");
  if (!start.converged) return {0.0, false};
  return {start.energy - relaxed->energy, relaxed->converged};
}

double property_mae(std::span<const double> values, double target) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += std::abs(v - target);
  return sum / static_cast<double>(values.size());
}

double min_pair_distance(const Positions& positions) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < positions.rows(); ++j) {
      best = std::min(best, (positions.row(i) - positions.row(j)).norm());
    }
  }
  return best;
}

bool toy_validity(const Positions& positions, const Oracle& oracle, double tol, double min_dist, RelaxOptions opts) {
  if (!positions.allFinite()) return false;
  if (!(min_pair_distance(positions) > min_dist)) return false;
  opts.tol = tol;
  const auto relaxed = oracle.relax(positions, opts);
  return relaxed && relaxed->converged;
}

double cosine_similarity(const Positions& a, const Positions& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return a.cwiseProduct(b).sum() / (na * nb);
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

CosineDiagnostic spsa_cosine_diagnostic(const StateObjective& objective, const GradientSource& analytic,
                                        std::span<const PointState> states, int n_probes, double zeta,
                                        NoiseStream& rng, bool center) {
  if (n_probes < 1) throw InvalidParameter("diagnostic needs at least one probe");
  CosineDiagnostic out;
  double worst_cos = std::numeric_limits<double>::infinity();
  double worst_err = 0.0;

  for (const auto& state : states) {
    const Positions grad = analytic(state);
    const double gnorm = grad.norm();
    if (gnorm == 0.0) out.degenerate = true;

    Positions mean = Positions::Zero(state.n_atoms(), 3);
    int used = 0;
    for (int p = 0; p < n_probes; ++p) {
      const Positions u = sample_perturbation(state.n_atoms(), rng, center);
      const auto d = spsa_directional(state, objective, u, zeta);
      if (!d) continue;
      const Positions est = *d * u;
      mean += est;
      ++used;
      out.per_probe.push_back(cosine_similarity(est, grad));
    }
    if (used > 0) mean /= static_cast<double>(used);

    const double cos = cosine_similarity(mean, grad);
    const double err = gnorm > 0.0 ? (mean - grad).norm() / gnorm : std::numeric_limits<double>::quiet_NaN();
    out.state_cosines.push_back(cos);
    out.state_rel_errors.push_back(err);
    if (!std::isnan(cos)) worst_cos = std::min(worst_cos, cos);
    if (!std::isnan(err)) worst_err = std::max(worst_err, err);
  }

  if (!out.degenerate && !states.empty()) {
    out.mean_estimate_cosine = worst_cos;
    out.max_relative_error = worst_err;
  }
  std::vector<double> finite_cos;
  for (double c : out.per_probe) {
    if (!std::isnan(c)) finite_cos.push_back(c);
  }
  out.per_probe_median = median(std::move(finite_cos));
  return out;
}

Histogram make_histogram(std::span<const double> values, int bins) {
  if (bins < 1) throw InvalidParameter("histogram needs at least one bin");
  Histogram h;
  double top = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) top = std::max(top, v);
  }
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) h.edges[b] = top * b / bins;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int b = 0;
    if (top > 0.0 && std::isfinite(v)) b = static_cast<int>(std::floor(std::max(v, 0.0) / top * bins));
    h.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
  }
  return h;
}

SampleRecord measure_sample(const PointState& decoded, const Oracle& oracle, const Property& property,
                            const ReportOptions& opts) {
  SampleRecord r;
  if (!decoded.positions.allFinite()) {
    r.force_rms = r.energy = r.energy_above_gs = r.property_value = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const OracleEval ev = oracle.evaluate(decoded.positions);
  r.force_rms = ev.converged ? force_rms(ev.gradient) : std::numeric_limits<double>::quiet_NaN();
  r.energy = ev.converged ? ev.energy : std::numeric_limits<double>::quiet_NaN();
  r.property_value = property(decoded).value;

  bool relaxed_ok = false;
  if (opts.relax_samples && ev.converged) {
    if (const auto relaxed = oracle.relax(decoded.positions, opts.relax)) {
      r.energy_above_gs = ev.energy - relaxed->energy;
      r.relax_converged = relaxed->converged;
      relaxed_ok = relaxed->converged && relaxed->force_rms < opts.validity_tol;
    }
  }
  r.valid = ev.converged && relaxed_ok && min_pair_distance(decoded.positions) > opts.min_dist;
  return r;
}

Aggregates aggregate(std::span<const SampleRecord> records, double target) {
  Aggregates a;
  a.n_samples = static_cast<int>(records.size());
  std::vector<double> rms;
  std::vector<double> gap;
  std::vector<double> props;
  for (const auto& r : records) {
    if (r.valid) ++a.n_valid;
    if (std::isfinite(r.force_rms)) {
      rms.push_back(r.force_rms);
    }
    if (std::isfinite(r.energy_above_gs)) gap.push_back(r.energy_above_gs);
    if (std::isfinite(r.property_value)) props.push_back(r.property_value);
  }
  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    // Sorting first makes the floating-point sum independent of record order.
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  };
  a.mean_force_rms = mean(rms);
  a.median_force_rms = median(rms);
  // Every sample of a run has the same atom count, so the pooled RMS is the
  // root of the mean squared per-sample RMS.
  {
    std::vector<double> sq;
    for (double v : rms) sq.push_back(v * v);
    a.pooled_force_rms = !sq.empty() ? std::sqrt(mean(sq)) : std::numeric_limits<double>::quiet_NaN();
  }
  a.mean_energy_above_gs = mean(gap);
  a.median_energy_above_gs = median(gap);
  a.mean_property = mean(props);
  {
    std::vector<double> dev;
    for (double p : props) dev.push_back(std::abs(p - target));
    a.property_mae = mean(dev);
  }
  std::vector<double> all_rms;
  std::vector<double> all_gap;
  for (const auto& r : records) {
    all_rms.push_back(r.force_rms);
    all_gap.push_back(r.energy_above_gs);
  }
  a.force_rms_hist = make_histogram(all_rms);
  a.energy_above_gs_hist = make_histogram(all_gap);
  return a;
}

}  // namespace ogd

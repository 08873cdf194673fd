#include "ogd/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ogd {

namespace {

// Noised-marginal variance of a component with clean scale s at step t.
double marginal_variance(double alpha, double scale) {
  return alpha * alpha * scale * scale + (1.0 - alpha * alpha);
}

void check_mean(const PointState& mean) {
  mean.validate(1e-10);
}

void check_against(const PointState& state, const PointState& mean) {
  if (!state.same_shape(mean)) throw ShapeMismatch("state shape differs from denoiser mean");
}

// Degrees of freedom of the state: the centred positions block loses one atom's worth.
double effective_dimension(const PointState& s) {
  const double pos = 3.0 * (s.cog_constrained ? s.n_atoms() - 1 : s.n_atoms());
  return pos + static_cast<double>(s.n_atoms()) * s.feature_dim();
}

double squared_distance(const PointState& x, const PointState& mean, double alpha) {
  return (x.positions - alpha * mean.positions).squaredNorm() +
         (x.features - alpha * mean.features).squaredNorm();
}

}  // namespace

Denoiser Denoiser::zero() { return Denoiser(Zero{}); }

Denoiser Denoiser::gaussian(PointState mean, double scale) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidParameter("gaussian scale must be >= 0");
  check_mean(mean);
  return Denoiser(Gaussian{std::move(mean), scale});
}

Denoiser Denoiser::mixture(std::vector<GaussianComponent> components) {
  if (components.empty()) throw InvalidParameter("mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0)) throw InvalidParameter("mixture weights must be positive");
    if (!(c.scale >= 0.0) || !std::isfinite(c.scale)) throw InvalidParameter("mixture scale must be >= 0");
    check_mean(c.mean);
    if (!c.mean.same_shape(components.front().mean)) throw ShapeMismatch("mixture means differ in shape");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidParameter("mixture weights must sum to 1");
  return Denoiser(Mixture{std::move(components)});
}

std::vector<double> Denoiser::responsibilities(const PointState& state, int t, const NoiseSchedule& sched) const {
  const auto* mix = std::get_if<Mixture>(&variant_);
  if (!mix) return {1.0};
  const double alpha = sched.alpha(t);
  const double dim = effective_dimension(state);
  std::vector<double> logw(mix->components.size());
  for (std::size_t k = 0; k < logw.size(); ++k) {
    const auto& c = mix->components[k];
    check_against(state, c.mean);
    const double v = marginal_variance(alpha, c.scale);
    logw[k] = std::log(c.weight) - 0.5 * dim * std::log(v) - squared_distance(state, c.mean, alpha) / (2.0 * v);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double norm = 0.0;
  for (auto& l : logw) {
    l = std::exp(l - top);
    norm += l;
  }
  for (auto& l : logw) l /= norm;
  return logw;
}

PointState Denoiser::predict_noise(const PointState& state, int t, const NoiseSchedule& sched) const {
  sched.check_step(t);
  if (!state.positions.allFinite() || !state.features.allFinite()) throw NonFiniteInput("denoiser input is not finite");

  PointState out = PointState::zeros(state.n_atoms(), state.feature_dim());
  out.cog_constrained = state.cog_constrained;
  const double alpha = sched.alpha(t);
  const double noise = sched.noise_level(t);

  auto accumulate = [&](const PointState& mean, double scale, double weight) {
    check_against(state, mean);
    const double c = weight * noise / marginal_variance(alpha, scale);
    out.positions += c * (state.positions - alpha * mean.positions);
    out.features += c * (state.features - alpha * mean.features);
  };

  std::visit(
      [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, Gaussian>) {
          accumulate(v.mean, v.scale, 1.0);
        } else if constexpr (std::is_same_v<V, Mixture>) {
          const auto r = responsibilities(state, t, sched);
          for (std::size_t k = 0; k < r.size(); ++k) {
            accumulate(v.components[k].mean, v.components[k].scale, r[k]);
          }
        }
      },
      variant_);
  return out;
}

Positions Denoiser::noise_vjp(const PointState& state, int t, const NoiseSchedule& sched,
                              const Positions& cotangent) const {
  sched.check_step(t);
  if (cotangent.rows() != state.n_atoms()) throw ShapeMismatch("cotangent rows differ from atom count");
  const double alpha = sched.alpha(t);
  const double noise = sched.noise_level(t);

  if (std::holds_alternative<Zero>(variant_)) return Positions::Zero(cotangent.rows(), 3);
  if (const auto* g = std::get_if<Gaussian>(&variant_)) {
    return (noise / marginal_variance(alpha, g->scale)) * cotangent;
  }

  // Mixture: eps = noise * sum_k r_k a_k with a_k = (x - alpha m_k) / v_k, so
  // d eps / dx = noise * (sum_k r_k I / v_k - (sum_k r_k a_k a_k^T - abar abar^T)).
  // Only the positions block of a_k meets a positions cotangent.
  const auto& comps = std::get<Mixture>(variant_).components;
  const auto r = responsibilities(state, t, sched);
  std::vector<Positions> a(comps.size());
  Positions abar = Positions::Zero(state.n_atoms(), 3);
  double diag = 0.0;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const double v = marginal_variance(alpha, comps[k].scale);
    a[k] = (state.positions - alpha * comps[k].mean.positions) / v;
    abar += r[k] * a[k];
    diag += r[k] / v;
  }
  Positions out = diag * cotangent;
  const double abar_w = abar.cwiseProduct(cotangent).sum();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    out -= r[k] * a[k].cwiseProduct(cotangent).sum() * a[k];
  }
  out += abar_w * abar;
  return noise * out;
}

PointState LinearDecoder::decode(const PointState& latent) const {
  PointState out = latent;
  out.positions = latent.positions * a_.transpose();
  return out;
}

Positions LinearDecoder::pullback(const PointState&, const Positions& grad) const { return grad * a_; }

std::shared_ptr<const Decoder> identity_decoder() {
  static const auto instance = std::make_shared<const IdentityDecoder>();
  return instance;
}

}  // namespace ogd

#pragma once

#include "ogd/geomstate.hpp"
#include "ogd/schedule.hpp"

#include <memory>
#include <variant>
#include <vector>

namespace ogd {

struct GaussianComponent {
  double weight = 1.0;
  PointState mean;
  double scale = 1.0;
};

/// Closed-form noise predictor for targets whose noised marginals are known exactly.
///
/// For an isotropic Gaussian target N(m, s^2 I) the forward process gives
/// x_t ~ N(alpha_t m, (alpha_t^2 s^2 + 1 - alpha_t^2) I), so the optimal predictor is
/// eps(x_t) = sqrt(1 - alpha_t^2) (x_t - alpha_t m) / (alpha_t^2 s^2 + 1 - alpha_t^2).
/// Mixtures combine the per-component predictors with posterior responsibilities.
class Denoiser {
 public:
  struct Zero {};
  struct Gaussian {
    PointState mean;
    double scale;
  };
  struct Mixture {
    std::vector<GaussianComponent> components;
  };
  using Variant = std::variant<Zero, Gaussian, Mixture>;

  static Denoiser zero();
  static Denoiser gaussian(PointState mean, double scale);
  static Denoiser mixture(std::vector<GaussianComponent> components);

  const Variant& variant() const { return variant_; }

  PointState predict_noise(const PointState& state, int t, const NoiseSchedule& sched) const;

  /// (d eps / d x_t)^T applied to a positions cotangent, positions block of the result.
  /// The Jacobian is symmetric (eps is a scaled score), so this is also the JVP.
  Positions noise_vjp(const PointState& state, int t, const NoiseSchedule& sched,
                      const Positions& cotangent) const;

  /// Mixture responsibilities at x_t (a single 1.0 for the other variants).
  std::vector<double> responsibilities(const PointState& state, int t, const NoiseSchedule& sched) const;

 private:
  explicit Denoiser(Variant v) : variant_(std::move(v)) {}
  Variant variant_;
};

/// The decoder stage D in the guidance composition f o D o t0.
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual PointState decode(const PointState& latent) const = 0;
  /// Pulls a positions gradient w.r.t. the decoded state back to the latent positions.
  virtual Positions pullback(const PointState& latent, const Positions& grad) const = 0;
};

class IdentityDecoder final : public Decoder {
 public:
  PointState decode(const PointState& latent) const override { return latent; }
  Positions pullback(const PointState&, const Positions& grad) const override { return grad; }
};

/// positions -> positions * A^T, features unchanged.
class LinearDecoder final : public Decoder {
 public:
  explicit LinearDecoder(const Eigen::Matrix3d& a) : a_(a) {}
  PointState decode(const PointState& latent) const override;
  Positions pullback(const PointState& latent, const Positions& grad) const override;

 private:
  Eigen::Matrix3d a_;
};

std::shared_ptr<const Decoder> identity_decoder();

}  // namespace ogd

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tsdiff/denoiser.hpp"
#include "tsdiff/forecast.hpp"
#include "tsdiff/mask.hpp"
#include "tsdiff/model.hpp"

namespace tsdiff {

enum class GuidanceVariant { MeanSquare, Quantile };

GuidanceVariant parse_guidance_variant(const std::string& s);
std::string to_string(GuidanceVariant v);

struct GuidanceConfig {
  GuidanceVariant variant = GuidanceVariant::Quantile;
  double scale = 4.0;
  /// Per-chain quantile levels. Empty means i/(N+1) for chain i = 1..N.
  std::vector<double> quantile_levels;
  /// Laplace scale b. Only b = 1 is supported.
  double laplace_scale = 1.0;
  /// Chains batched through the network together. Part of the numeric
  /// contract: results depend on it, not on the thread count.
  int chain_chunk = 8;

  void validate() const;

  /// Mean-square guidance scale that worked across datasets.
  static constexpr double kDefaultMeanSquareScale = 4.0 / 32.0;
};

/// Evenly spaced levels i/(N+1), i = 1..N.
std::vector<double> assign_quantile_levels(int n);

/// grad_x log N(y_obs | f(x_t, t), I) where f is the one-step denoised
/// estimate; the gradient passes through the denoiser.
Window ms_guidance_score(const Denoiser& net, const NoiseSchedule& sched, const Window& x_t, int t,
                         const ObservationMask& mask);

/// grad_x of the negative pinball loss sum_obs rho_kappa(y_obs - f(x_t, t)),
/// i.e. the asymmetric-Laplace log-density with b = 1. The subgradient is 0
/// where the residual is exactly 0.
Window quantile_guidance_score(const Denoiser& net, const NoiseSchedule& sched, const Window& x_t, int t,
                               const ObservationMask& mask, double kappa);

/// reverse_step plus s * sigma_t^2 * score(x_t). With s = 0 or sigma_t = 0
/// this is exactly reverse_step.
Window guided_reverse_step(const Denoiser& net, const NoiseSchedule& sched, const Window& x_t, int t,
                           const ObservationMask& mask, const GuidanceConfig& cfg, double kappa,
                           const Window& noise);

/// Runs n reverse chains from x^T ~ N(0, I). Chain i draws from its own
/// stream seeded by (seed, i): first x^T, then one L x C noise block per step
/// t = T..2. With `mask` empty the chains are unconditional. Returns the
/// full normalized x^0 windows (n x L, channel 0 only).
Eigen::MatrixXd sample_chains(const DiffusionModel& model, const std::optional<ObservationMask>& mask,
                              const GuidanceConfig& cfg, int n, std::uint64_t seed);

/// Observation self-guided forecast: target entries of channel 0 multiplied
/// back by `scale`. The mask values are in normalized units.
ForecastEnsemble self_guided_sample(const DiffusionModel& model, const ObservationMask& mask, double scale,
                                    const GuidanceConfig& cfg, int n, std::uint64_t seed);

}  // namespace tsdiff

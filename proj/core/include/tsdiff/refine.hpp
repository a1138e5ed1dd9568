#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tsdiff/forecast.hpp"
#include "tsdiff/model.hpp"

namespace tsdiff {

enum class RefineVariant { LMC, ML };
enum class Regularizer { MeanSquare, Quantile };

RefineVariant parse_refine_variant(const std::string& s);
Regularizer parse_regularizer(const std::string& s);
std::string to_string(RefineVariant v);
std::string to_string(Regularizer r);

struct RefinementConfig {
  RefineVariant variant = RefineVariant::LMC;
  Regularizer regularizer = Regularizer::Quantile;
  double eta = 0.05;    ///< step size
  double gamma = 1.0;   ///< noise factor; ignored (treated as 0) for ML
  double lambda = 1.0;  ///< regularization weight
  int iterations = 20;
  int tau = 0;  ///< representative step; 0 means "take it from the model"
  bool fresh_eps_per_iter = true;
  int path_chunk = 16;  ///< paths batched together; results depend on it

  double effective_gamma() const { return variant == RefineVariant::ML ? 0.0 : gamma; }
  /// Resolves tau against the model and validates every field.
  int resolve_tau(const DiffusionModel& model) const;
  void validate() const;
};

/// The series to refine, in normalized units: observed entries carry y_obs,
/// target entries carry the base forecast.
struct RefinementInput {
  Eigen::VectorXd combined;     ///< length L
  std::vector<bool> observed;   ///< length L
  Window lags;                  ///< L x (C-1) lag channels, held fixed; may be empty
  double scale = 1.0;

  Eigen::Index length() const { return combined.size(); }
};

/// Builds the combined series from the observed window values (target
/// entries ignored) and a base forecast over the target entries in order.
RefinementInput combine_with_base(const Eigen::VectorXd& window, const std::vector<bool>& observed,
                                  const Eigen::VectorXd& base_targets, double scale, Window lags = {});

/// Mean denoising loss per diffusion step over `batch` (normalized L x C
/// windows). Window i draws eps for steps 1..T, in order, from stream (seed, i).
std::vector<double> per_step_losses(const DiffusionModel& model, std::span<const Window> batch, std::uint64_t seed);

/// 1-based step whose loss is closest to the mean over all steps; ties go to
/// the smaller step.
int representative_step_from_losses(std::span<const double> losses);

int representative_step(const DiffusionModel& model, std::span<const Window> batch, std::uint64_t seed);

/// ||eps_theta(x^tau, tau) - eps||^2 + lambda * R(y, y~) with
/// x^tau = sqrt(abar) y + sqrt(1 - abar) eps. R is 0.5 ||y - y~||^2 (mean
/// square) or sum Lambda_kappa(y, y~) (quantile) over all L entries.
double energy_value(const DiffusionModel& model, const Eigen::VectorXd& y, const RefinementInput& input,
                    const RefinementConfig& cfg, int tau, double kappa, const Window& eps);

/// Gradient of energy_value with respect to y.
Eigen::VectorXd energy_grad(const DiffusionModel& model, const Eigen::VectorXd& y, const RefinementInput& input,
                            const RefinementConfig& cfg, int tau, double kappa, const Window& eps);

/// Langevin refinement of one path: y <- y - eta grad E + sqrt(2 eta gamma) xi,
/// starting from the combined series. Each iteration draws eps (L x C,
/// row-major) when fresh_eps_per_iter or on the first iteration, then xi
/// (length L) when gamma > 0, from `rng`. Observed entries are reset to
/// y_obs after the last iteration. Returns the full normalized window.
Eigen::VectorXd refine_path(const DiffusionModel& model, const RefinementInput& input, const RefinementConfig& cfg,
                            double kappa, std::mt19937_64& rng);

/// Refines one path with kappa = 0.5 and returns target entries in original units.
Eigen::VectorXd refine(const DiffusionModel& model, const RefinementInput& input, const RefinementConfig& cfg,
                       std::uint64_t seed);

/// Refines every sample path of a base ensemble independently. Path i uses
/// stream (seed, i) and quantile level i/(N+1). `base` must cover exactly the
/// target entries of `observed`; its values are in original units.
ForecastEnsemble refine_ensemble(const DiffusionModel& model, const Eigen::VectorXd& window,
                                 const std::vector<bool>& observed, double scale, const ForecastEnsemble& base,
                                 const RefinementConfig& cfg, std::uint64_t seed, const Window& lags = {});

}  // namespace tsdiff

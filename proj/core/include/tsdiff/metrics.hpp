#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "tsdiff/forecast.hpp"

namespace tsdiff {

/// {0.1, 0.2, ..., 0.9}
const std::vector<double>& standard_quantile_levels();

/// Lambda_kappa(q, y) = (kappa - 1{y < q}) (y - q).
double pinball_loss(double q, double y, double kappa);

/// Empirical quantile of `sorted` (ascending) by linear interpolation between
/// order statistics at position N*kappa - 0.5 (midpoint rule), clamped to
/// the sample range.
double empirical_quantile(std::span<const double> sorted, double kappa);

/// Mean over the nine standard levels of 2 * Lambda_kappa(q_kappa, y), with
/// q_kappa the empirical quantile of `ensemble`.
double crps(std::span<const double> ensemble, double y);

/// Per-series sums used by aggregate_crps: numerator sum of 2*Lambda over
/// timesteps and levels, denominator sum |y|.
struct CrpsTerms {
  double weighted_loss = 0.0;
  double abs_target = 0.0;
};

CrpsTerms crps_terms(const ForecastEnsemble& forecast, std::span<const double> actual);

/// sum 2*Lambda / (levels * sum |y|) over all series, timesteps and levels.
/// `actuals[i]` holds the true values at forecasts[i].indices. Throws
/// NumericError when every actual is zero.
double aggregate_crps(std::span<const ForecastEnsemble> forecasts, std::span<const Eigen::VectorXd> actuals);

/// Normalized 0.5-quantile loss sum |y - q| / sum |y| of point forecasts.
double normalized_deviation(std::span<const Eigen::VectorXd> point, std::span<const Eigen::VectorXd> actuals);

/// Linear Predictive Score: fit a ridge regressor (alpha = 1, no intercept,
/// each window mean-scaled by its context) on `synthetic` windows of length
/// context + horizon, then return its normalized 0.5-quantile loss on the
/// horizons of `real_test`.
double lps(std::span<const Eigen::VectorXd> synthetic, std::span<const Eigen::VectorXd> real_test, int context,
           int horizon, double alpha = 1.0);

}  // namespace tsdiff

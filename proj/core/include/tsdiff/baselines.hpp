#pragma once

#include <Eigen/Core>
#include <span>

namespace tsdiff {

/// forecast[h] = context[n - season + (h mod season)].
Eigen::VectorXd seasonal_naive(std::span<const double> context, int season, int horizon);

/// W = (X^T X + alpha I)^{-1} X^T Y via Cholesky. alpha = 0 requires X to have
/// full column rank; otherwise NumericError.
Eigen::MatrixXd ridge_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double alpha);

/// context^T W (no intercept).
Eigen::VectorXd ridge_forecast(const Eigen::MatrixXd& weights, const Eigen::VectorXd& context);

/// Ridge regressor from a context window to the following horizon, operating
/// on mean-scaled windows.
struct RidgeModel {
  Eigen::MatrixXd weights;  // context x horizon
  int context = 0;
  int horizon = 0;

  /// Scales `raw_context` by its mean absolute value, predicts, and scales back.
  Eigen::VectorXd forecast(const Eigen::VectorXd& raw_context) const;
};

/// Fits on windows of length context + horizon.
RidgeModel fit_windowed_ridge(std::span<const Eigen::VectorXd> windows, int context, int horizon, double alpha);

}  // namespace tsdiff

#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace tsdiff {

/// Sample paths over a set of target positions of one series.
struct ForecastEnsemble {
  std::string item_id;
  /// Position in the series of window index 0.
  long long window_start = 0;
  /// Window-relative indices covered by the columns of `samples`.
  std::vector<int> indices;
  /// N x K, one sample path per row, in original units.
  Eigen::MatrixXd samples;

  Eigen::Index num_samples() const { return samples.rows(); }
  Eigen::Index num_targets() const { return samples.cols(); }

  /// Empirical quantile at level kappa for every target column.
  Eigen::VectorXd quantile(double kappa) const;
  /// levels.size() x K matrix of empirical quantiles.
  Eigen::MatrixXd quantiles(const std::vector<double>& levels) const;
  /// Keeps only the columns whose index is >= first_index.
  ForecastEnsemble tail_from(int first_index) const;
};

/// Point forecast lifted to an ensemble of `n` identical paths.
ForecastEnsemble replicate_point_forecast(const Eigen::VectorXd& point, int n, std::vector<int> indices);

}  // namespace tsdiff

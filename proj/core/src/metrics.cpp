#include "tsdiff/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "tsdiff/baselines.hpp"
#include "tsdiff/data.hpp"
#include "tsdiff/errors.hpp"

namespace tsdiff {

const std::vector<double>& standard_quantile_levels() {
  static const std::vector<double> levels{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  return levels;
}

double pinball_loss(double q, double y, double kappa) {
  const double indicator = y < q ? 1.0 : 0.0;
  return (kappa - indicator) * (y - q);
}

double empirical_quantile(std::span<const double> sorted, double kappa) {
  if (sorted.empty()) throw ParameterError("empirical_quantile: empty sample");
  const auto n = static_cast<double>(sorted.size());
  const double pos = std::clamp(n * kappa - 0.5, 0.0, n - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double crps(std::span<const double> ensemble, double y) {
  if (ensemble.empty()) throw ParameterError("crps: empty ensemble");
  std::vector<double> sorted(ensemble.begin(), ensemble.end());
  std::sort(sorted.begin(), sorted.end());
  const auto& levels = standard_quantile_levels();
  double total = 0.0;
  for (double k : levels) total += 2.0 * pinball_loss(empirical_quantile(sorted, k), y, k);
  return total / static_cast<double>(levels.size());
}

Eigen::VectorXd ForecastEnsemble::quantile(double kappa) const {
  if (samples.rows() == 0) throw ParameterError("quantile of an empty ensemble");
  Eigen::VectorXd q(samples.cols());
  std::vector<double> col(samples.rows());
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    for (Eigen::Index i = 0; i < samples.rows(); ++i) col[i] = samples(i, j);
    std::sort(col.begin(), col.end());
    q[j] = empirical_quantile(col, kappa);
  }
  return q;
}

Eigen::MatrixXd ForecastEnsemble::quantiles(const std::vector<double>& levels) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(levels.size()), samples.cols());
  for (std::size_t k = 0; k < levels.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = quantile(levels[k]).transpose();
  return out;
}

ForecastEnsemble ForecastEnsemble::tail_from(int first_index) const {
  ForecastEnsemble out;
  out.item_id = item_id;
  out.window_start = window_start;
  std::vector<Eigen::Index> keep;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= first_index) {
      keep.push_back(static_cast<Eigen::Index>(k));
      out.indices.push_back(indices[k]);
    }
  }
  out.samples.resize(samples.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) out.samples.col(static_cast<Eigen::Index>(k)) = samples.col(keep[k]);
  return out;
}

ForecastEnsemble replicate_point_forecast(const Eigen::VectorXd& point, int n, std::vector<int> indices) {
  if (n < 1) throw ParameterError("replicate_point_forecast: n must be positive");
  if (static_cast<Eigen::Index>(indices.size()) != point.size()) throw ShapeError("replicate_point_forecast: index count");
  ForecastEnsemble e;
  e.indices = std::move(indices);
  e.samples = point.transpose().replicate(n, 1);
  return e;
}

CrpsTerms crps_terms(const ForecastEnsemble& forecast, std::span<const double> actual) {
  if (static_cast<Eigen::Index>(actual.size()) != forecast.num_targets()) {
    throw ShapeError("crps: forecast '" + forecast.item_id + "' has " + std::to_string(forecast.num_targets()) +
                     " targets but " + std::to_string(actual.size()) + " actual values");
  }
  if (forecast.num_samples() == 0) throw ParameterError("crps: empty ensemble for '" + forecast.item_id + "'");
  const auto& levels = standard_quantile_levels();
  const Eigen::MatrixXd q = forecast.quantiles(levels);
  CrpsTerms t;
  for (Eigen::Index j = 0; j < forecast.num_targets(); ++j) {
    for (std::size_t k = 0; k < levels.size(); ++k) {
      t.weighted_loss += 2.0 * pinball_loss(q(static_cast<Eigen::Index>(k), j), actual[j], levels[k]);
    }
    t.abs_target += std::abs(actual[j]);
  }
  return t;
}

double aggregate_crps(std::span<const ForecastEnsemble> forecasts, std::span<const Eigen::VectorXd> actuals) {
  if (forecasts.size() != actuals.size()) throw ShapeError("aggregate_crps: forecast/actual count mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const CrpsTerms t = crps_terms(forecasts[i], {actuals[i].data(), static_cast<std::size_t>(actuals[i].size())});
    num += t.weighted_loss;
    den += t.abs_target;
  }
  if (den == 0.0) throw NumericError("aggregate_crps: all actual values are zero");
  return num / (static_cast<double>(standard_quantile_levels().size()) * den);
}

double normalized_deviation(std::span<const Eigen::VectorXd> point, std::span<const Eigen::VectorXd> actuals) {
  if (point.size() != actuals.size()) throw ShapeError("normalized_deviation: count mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    if (point[i].size() != actuals[i].size()) throw ShapeError("normalized_deviation: length mismatch");
    num += (point[i] - actuals[i]).cwiseAbs().sum();
    den += actuals[i].cwiseAbs().sum();
  }
  if (den == 0.0) throw NumericError("normalized_deviation: all actual values are zero");
  return num / den;
}

double lps(std::span<const Eigen::VectorXd> synthetic, std::span<const Eigen::VectorXd> real_test, int context,
           int horizon, double alpha) {
  if (context <= 0 || horizon <= 0) throw ParameterError("lps: context and horizon must be positive");
  if (synthetic.empty()) throw ParameterError("lps: no synthetic samples");
  const RidgeModel ridge = fit_windowed_ridge(synthetic, context, horizon, alpha);
  std::vector<Eigen::VectorXd> pred, actual;
  pred.reserve(real_test.size());
  actual.reserve(real_test.size());
  for (const auto& w : real_test) {
    if (w.size() != context + horizon) throw ShapeError("lps: test window length must equal context + horizon");
    pred.push_back(ridge.forecast(w.head(context)));
    actual.push_back(w.tail(horizon));
  }
  return normalized_deviation(pred, actual);
}

}  // namespace tsdiff

#include "tsdiff/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <string>

#include "tsdiff/data.hpp"
#include "tsdiff/errors.hpp"

namespace tsdiff {

Eigen::VectorXd seasonal_naive(std::span<const double> context, int season, int horizon) {
  if (season <= 0 || horizon < 0) throw ParameterError("seasonal_naive: season must be positive");
  const auto n = static_cast<long long>(context.size());
  if (n < season) {
    throw ParameterError("seasonal_naive: context of length " + std::to_string(n) + " is shorter than season " +
                         std::to_string(season));
  }
  Eigen::VectorXd out(horizon);
  for (int h = 0; h < horizon; ++h) out[h] = context[n - season + (h % season)];
  return out;
}

Eigen::MatrixXd ridge_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double alpha) {
  if (x.rows() != y.rows()) throw ShapeError("ridge_fit: X and Y must have the same number of rows");
  if (alpha < 0.0) throw ParameterError("ridge_fit: alpha must be non-negative");
  if (alpha == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols()) throw NumericError("ridge_fit: X is rank deficient and alpha = 0");
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += alpha;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericError("ridge_fit: normal equations are not positive definite");
  return llt.solve(x.transpose() * y);
}

Eigen::VectorXd ridge_forecast(const Eigen::MatrixXd& weights, const Eigen::VectorXd& context) {
  if (context.size() != weights.rows()) {
    throw ShapeError("ridge_forecast: context length " + std::to_string(context.size()) + " but weights expect " +
                     std::to_string(weights.rows()));
  }
  return weights.transpose() * context;
}

Eigen::VectorXd RidgeModel::forecast(const Eigen::VectorXd& raw_context) const {
  const ScaledWindow s = mean_scale({raw_context.data(), static_cast<std::size_t>(raw_context.size())});
  return ridge_forecast(weights, s.values) * s.scale;
}

RidgeModel fit_windowed_ridge(std::span<const Eigen::VectorXd> windows, int context, int horizon, double alpha) {
  const auto n = static_cast<Eigen::Index>(windows.size());
  Eigen::MatrixXd x(n, context), y(n, horizon);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& w = windows[i];
    if (w.size() != context + horizon) throw ShapeError("fit_windowed_ridge: window length must be context + horizon");
    const ScaledWindow s = mean_scale({w.data(), static_cast<std::size_t>(w.size())}, context);
    x.row(i) = s.values.head(context).transpose();
    y.row(i) = s.values.tail(horizon).transpose();
  }
  return RidgeModel{ridge_fit(x, y, alpha), context, horizon};
}

}  // namespace tsdiff

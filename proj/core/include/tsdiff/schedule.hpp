#pragma once

#include <Eigen/Core>
#include <vector>

namespace tsdiff {

/// A window of a (possibly diffused) series: rows are timesteps, columns are
/// channels. Column 0 is the series itself, columns 1..C-1 are lag channels.
using Window = Eigen::MatrixXd;

/// Fixed forward-process parameters of a DDPM with T steps.
///
/// All arrays are stored 1-based in spirit: `beta(t)` for t in [1, T].
/// `alpha_bar(0)` is defined as 1 so that the posterior variance at the
/// final reverse step (t = 1) is exactly zero.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  int steps() const { return static_cast<int>(beta_.size()); }

  double beta(int t) const { return beta_.at(t - 1); }
  double alpha(int t) const { return alpha_.at(t - 1); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_.at(t - 1); }
  /// Posterior variance sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t.
  double sigma2(int t) const { return sigma2_.at(t - 1); }

  double beta_first() const { return beta_.front(); }
  double beta_last() const { return beta_.back(); }

  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

  friend NoiseSchedule build_linear_schedule(int steps, double beta_1, double beta_T);

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma2_;
};

/// Linear beta schedule from beta_1 to beta_T over `steps` >= 2 steps.
/// Throws ParameterError unless 0 < beta_1 <= beta_T < 1.
NoiseSchedule build_linear_schedule(int steps, double beta_1, double beta_T);

/// x^t = sqrt(abar_t) * y + sqrt(1 - abar_t) * eps.
Window forward_sample(const Window& y, int t, const Window& eps, const NoiseSchedule& sched);

/// Reverse-process mean
/// mu = (x_t - beta_t / sqrt(1 - abar_t) * eps_pred) / sqrt(alpha_t).
Window posterior_mean(const Window& x_t, const Window& eps_pred, int t, const NoiseSchedule& sched);

/// One ancestral step: posterior_mean + sigma_t * noise. The caller owns the
/// Gaussian draw so that chains can be replayed.
Window reverse_step(const Window& x_t, const Window& eps_pred, int t, const Window& noise,
                    const NoiseSchedule& sched);

/// Mean squared error over all elements.
double denoising_loss(const Window& eps_pred, const Window& eps);

/// Clean-data estimate obtained by inverting forward_sample with eps := eps_pred.
Window one_step_denoise(const Window& x_t, const Window& eps_pred, int t, const NoiseSchedule& sched);

/// Validates 1 <= t <= T, throwing ParameterError otherwise.
void check_step(int t, const NoiseSchedule& sched);

}  // namespace tsdiff

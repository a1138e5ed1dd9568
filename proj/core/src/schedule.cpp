#include "tsdiff/schedule.hpp"

#include <cmath>
#include <string>

#include "tsdiff/errors.hpp"

namespace tsdiff {
namespace {

void check_same_shape(const Window& a, const Window& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

}  // namespace

void check_step(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw ParameterError("diffusion step " + std::to_string(t) + " outside [1, " +
                         std::to_string(sched.steps()) + "]");
  }
}

NoiseSchedule build_linear_schedule(int steps, double beta_1, double beta_T) {
  if (steps < 2) throw ParameterError("schedule needs at least 2 steps");
  if (!(beta_1 > 0.0) || !(beta_1 <= beta_T) || !(beta_T < 1.0)) {
    throw ParameterError("linear schedule requires 0 < beta_1 <= beta_T < 1");
  }
  NoiseSchedule s;
  s.beta_.resize(steps);
  s.alpha_.resize(steps);
  s.alpha_bar_.resize(steps);
  s.sigma2_.resize(steps);
  const double slope = (beta_T - beta_1) / static_cast<double>(steps - 1);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double b = beta_1 + static_cast<double>(i) * slope;
    const double prev = prod;
    s.beta_[i] = b;
    s.alpha_[i] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar_[i] = prod;
    s.sigma2_[i] = (1.0 - prev) / (1.0 - prod) * b;
  }
  return s;
}

Window forward_sample(const Window& y, int t, const Window& eps, const NoiseSchedule& sched) {
  check_step(t, sched);
  check_same_shape(y, eps, "forward_sample");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * y + std::sqrt(1.0 - ab) * eps;
}

Window posterior_mean(const Window& x_t, const Window& eps_pred, int t, const NoiseSchedule& sched) {
  check_step(t, sched);
  check_same_shape(x_t, eps_pred, "posterior_mean");
  const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  return (x_t - coef * eps_pred) / std::sqrt(sched.alpha(t));
}

Window reverse_step(const Window& x_t, const Window& eps_pred, int t, const Window& noise,
                    const NoiseSchedule& sched) {
  check_same_shape(x_t, noise, "reverse_step");
  Window mu = posterior_mean(x_t, eps_pred, t, sched);
  const double sigma = std::sqrt(sched.sigma2(t));
  if (sigma != 0.0) mu += sigma * noise;
  return mu;
}

double denoising_loss(const Window& eps_pred, const Window& eps) {
  check_same_shape(eps_pred, eps, "denoising_loss");
  if (eps.size() == 0) return 0.0;
  return (eps_pred - eps).squaredNorm() / static_cast<double>(eps.size());
}

Window one_step_denoise(const Window& x_t, const Window& eps_pred, int t, const NoiseSchedule& sched) {
  check_step(t, sched);
  check_same_shape(x_t, eps_pred, "one_step_denoise");
  const double ab = sched.alpha_bar(t);
  return (x_t - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
}

}  // namespace tsdiff

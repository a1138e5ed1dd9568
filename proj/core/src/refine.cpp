#include "tsdiff/refine.hpp"

#include <cmath>
#include <sstream>

#include "tsdiff/errors.hpp"
#include "tsdiff/guidance.hpp"
#include "tsdiff/parallel.hpp"
#include "tsdiff/rng.hpp"

namespace tsdiff {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Window full_window(const VectorXd& y, const RefinementInput& in, Eigen::Index channels) {
  Window w(y.size(), channels);
  w.col(0) = y;
  if (channels > 1) {
    if (in.lags.rows() != y.size() || in.lags.cols() != channels - 1) {
      throw ShapeError("refinement: lag channels do not match the model");
    }
    w.rightCols(channels - 1) = in.lags;
  }
  return w;
}

// Gradient of the prior term ||eps_theta(x^tau) - eps||^2 for a batch of
// paths; column k is d/dy of path k. Also returns the prior values.
MatrixXd prior_grad(const DiffusionModel& model, int tau, std::span<const VectorXd* const> ys,
                    std::span<const RefinementInput* const> inputs, std::span<const Window> eps,
                    std::vector<double>* values) {
  const Denoiser net = model.denoiser();
  const Eigen::Index len = model.config.length;
  const Eigen::Index ch = model.config.input_channels;
  const double ab = model.schedule.alpha_bar(tau);
  const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
  std::vector<Window> xs(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (ys[k]->size() != len) throw ShapeError("refinement: series length does not match the model");
    xs[k] = sa * full_window(*ys[k], *inputs[k], ch) + sb * eps[k];
  }
  const std::vector<int> steps(ys.size(), tau);
  DenoiserTape tape;
  const MatrixXd pred = net.forward_batch(pack_windows(xs), steps, &tape);
  const MatrixXd resid = pred - pack_windows(eps);
  if (values) {
    values->resize(ys.size());
    for (std::size_t k = 0; k < ys.size(); ++k) {
      (*values)[k] = resid.middleCols(static_cast<Eigen::Index>(k) * len, len).squaredNorm();
    }
  }
  MatrixXd dx;
  net.backward(tape, 2.0 * resid, &dx, {});
  MatrixXd g(len, static_cast<Eigen::Index>(ys.size()));
  for (std::size_t k = 0; k < ys.size(); ++k) {
    g.col(static_cast<Eigen::Index>(k)) = sa * dx.block(0, static_cast<Eigen::Index>(k) * len, 1, len).transpose();
  }
  return g;
}

double reg_value(Regularizer r, const VectorXd& y, const VectorXd& target, double kappa) {
  if (r == Regularizer::MeanSquare) return 0.5 * (y - target).squaredNorm();
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double ind = target[i] < y[i] ? 1.0 : 0.0;
    s += (kappa - ind) * (target[i] - y[i]);
  }
  return s;
}

VectorXd reg_grad(Regularizer r, const VectorXd& y, const VectorXd& target, double kappa) {
  if (r == Regularizer::MeanSquare) return y - target;
  VectorXd g(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    g[i] = y[i] < target[i] ? -kappa : (y[i] > target[i] ? 1.0 - kappa : 0.0);
  }
  return g;
}

Window draw_window(std::mt19937_64& rng, std::normal_distribution<double>& normal, Eigen::Index len, Eigen::Index ch) {
  Window w(len, ch);
  for (Eigen::Index i = 0; i < len; ++i)
    for (Eigen::Index c = 0; c < ch; ++c) w(i, c) = normal(rng);
  return w;
}

void check_input(const DiffusionModel& model, const RefinementInput& in) {
  if (in.combined.size() != model.config.length || static_cast<Eigen::Index>(in.observed.size()) != in.combined.size()) {
    throw ShapeError("refinement input length does not match the model window");
  }
  if (!in.combined.allFinite()) throw NumericError("refinement input is not finite");
}

struct PathState {
  VectorXd y;
  const RefinementInput* input = nullptr;
  double kappa = 0.5;
  std::mt19937_64* rng = nullptr;
  // One distribution per path: libstdc++ caches every second draw.
  std::normal_distribution<double> normal{0.0, 1.0};
};

void run_paths(const DiffusionModel& model, const RefinementConfig& cfg, int tau, std::span<PathState> paths) {
  const Eigen::Index len = model.config.length;
  const Eigen::Index ch = model.config.input_channels;
  const double gamma = cfg.effective_gamma();
  const double noise_coef = std::sqrt(2.0 * cfg.eta * gamma);
  std::vector<Window> eps(paths.size());
  std::vector<const VectorXd*> ys(paths.size());
  std::vector<const RefinementInput*> ins(paths.size());
  std::vector<double> limits(paths.size());
  for (std::size_t k = 0; k < paths.size(); ++k) {
    ys[k] = &paths[k].y;
    ins[k] = paths[k].input;
    limits[k] = 1e6 * std::max(1.0, paths[k].input->combined.cwiseAbs().maxCoeff());
  }
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<VectorXd> xi(paths.size());
    for (std::size_t k = 0; k < paths.size(); ++k) {
      if (cfg.fresh_eps_per_iter || it == 0) eps[k] = draw_window(*paths[k].rng, paths[k].normal, len, ch);
      if (gamma > 0.0) xi[k] = VectorXd::NullaryExpr(len, [&]() { return paths[k].normal(*paths[k].rng); });
    }
    const MatrixXd prior = prior_grad(model, tau, ys, ins, eps, nullptr);
    for (std::size_t k = 0; k < paths.size(); ++k) {
      auto& p = paths[k];
      const VectorXd grad = prior.col(static_cast<Eigen::Index>(k)) +
                            cfg.lambda * reg_grad(cfg.regularizer, p.y, p.input->combined, p.kappa);
      p.y -= cfg.eta * grad;
      if (gamma > 0.0) p.y += noise_coef * xi[k];
      if (!p.y.allFinite() || p.y.cwiseAbs().maxCoeff() > limits[k]) {
        std::ostringstream msg;
        msg << "refinement diverged at iteration " << it + 1 << " of " << cfg.iterations << " (eta=" << cfg.eta
            << ", gamma=" << gamma << ")";
        throw NumericError(msg.str());
      }
    }
  }
  for (auto& p : paths) {
    for (Eigen::Index i = 0; i < len; ++i) {
      if (p.input->observed[i]) p.y[i] = p.input->combined[i];
    }
  }
}

}  // namespace

RefineVariant parse_refine_variant(const std::string& s) {
  if (s == "lmc") return RefineVariant::LMC;
  if (s == "ml") return RefineVariant::ML;
  throw ParameterError("unknown refinement variant '" + s + "' (expected lmc or ml)");
}

Regularizer parse_regularizer(const std::string& s) {
  if (s == "ms") return Regularizer::MeanSquare;
  if (s == "q") return Regularizer::Quantile;
  throw ParameterError("unknown regularizer '" + s + "' (expected ms or q)");
}

std::string to_string(RefineVariant v) { return v == RefineVariant::LMC ? "lmc" : "ml"; }
std::string to_string(Regularizer r) { return r == Regularizer::MeanSquare ? "ms" : "q"; }

void RefinementConfig::validate() const {
  if (!(eta >= 0.0)) throw ParameterError("refinement step size must be non-negative");
  if (!(gamma >= 0.0)) throw ParameterError("refinement noise factor must be non-negative");
  if (!(lambda >= 0.0)) throw ParameterError("refinement lambda must be non-negative");
  if (iterations < 1) throw ParameterError("refinement needs at least one iteration");
  if (path_chunk < 1) throw ParameterError("path_chunk must be positive");
}

int RefinementConfig::resolve_tau(const DiffusionModel& model) const {
  validate();
  const int t = tau > 0 ? tau : model.meta.representative_step;
  if (t < 1 || t > model.schedule.steps()) {
    throw ParameterError("representative step " + std::to_string(t) + " outside [1, " +
                         std::to_string(model.schedule.steps()) + "]; set tau or compute it at training time");
  }
  return t;
}

RefinementInput combine_with_base(const VectorXd& window, const std::vector<bool>& observed,
                                  const VectorXd& base_targets, double scale, Window lags) {
  if (static_cast<Eigen::Index>(observed.size()) != window.size()) throw ShapeError("combine: mask length");
  RefinementInput in;
  in.combined = window;
  in.observed = observed;
  in.lags = std::move(lags);
  in.scale = scale;
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < window.size(); ++i) {
    if (observed[i]) continue;
    if (k >= base_targets.size()) throw ShapeError("combine: base forecast shorter than the target set");
    in.combined[i] = base_targets[k++];
  }
  if (k != base_targets.size()) throw ShapeError("combine: base forecast longer than the target set");
  return in;
}

std::vector<double> per_step_losses(const DiffusionModel& model, std::span<const Window> batch, std::uint64_t seed) {
  if (batch.empty()) throw ParameterError("representative step: empty batch");
  const Denoiser net = model.denoiser();
  const int steps = model.schedule.steps();
  const Eigen::Index len = model.config.length;
  const Eigen::Index ch = model.config.input_channels;
  // eps[i][t-1] for window i.
  std::vector<std::vector<Window>> eps(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].rows() != len || batch[i].cols() != ch) throw ShapeError("representative step: window shape");
    auto rng = stream_rng(seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    eps[i].reserve(steps);
    for (int t = 1; t <= steps; ++t) eps[i].push_back(draw_window(rng, normal, len, ch));
  }
  constexpr std::size_t chunk = 32;
  const std::size_t n_chunks = (batch.size() + chunk - 1) / chunk;
  std::vector<double> losses(steps, 0.0);
  std::vector<std::vector<double>> partial(n_chunks, std::vector<double>(steps));
  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t lo = c * chunk, hi = std::min(batch.size(), lo + chunk);
    for (int t = 1; t <= steps; ++t) {
      std::vector<Window> xs, es;
      for (std::size_t i = lo; i < hi; ++i) {
        es.push_back(eps[i][t - 1]);
        xs.push_back(forward_sample(batch[i], t, es.back(), model.schedule));
      }
      const std::vector<int> ts(xs.size(), t);
      const MatrixXd pred = net.forward_batch(pack_windows(xs), ts);
      partial[c][t - 1] = (pred - pack_windows(es)).squaredNorm();
    }
  });
  const double denom = static_cast<double>(batch.size() * len * ch);
  for (int t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < n_chunks; ++c) losses[t] += partial[c][t];
    losses[t] /= denom;
  }
  return losses;
}

int representative_step_from_losses(std::span<const double> losses) {
  if (losses.empty()) throw ParameterError("representative step: no losses");
  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= static_cast<double>(losses.size());
  std::size_t best = 0;
  for (std::size_t t = 1; t < losses.size(); ++t) {
    if (std::abs(losses[t] - mean) < std::abs(losses[best] - mean)) best = t;
  }
  return static_cast<int>(best) + 1;
}

int representative_step(const DiffusionModel& model, std::span<const Window> batch, std::uint64_t seed) {
  const auto losses = per_step_losses(model, batch, seed);
  return representative_step_from_losses(losses);
}

double energy_value(const DiffusionModel& model, const VectorXd& y, const RefinementInput& input,
                    const RefinementConfig& cfg, int tau, double kappa, const Window& eps) {
  check_input(model, input);
  check_step(tau, model.schedule);
  const Denoiser net = model.denoiser();
  const double ab = model.schedule.alpha_bar(tau);
  const Window x = std::sqrt(ab) * full_window(y, input, model.config.input_channels) + std::sqrt(1.0 - ab) * eps;
  const double prior = (net.forward(x, tau) - eps).squaredNorm();
  return prior + cfg.lambda * reg_value(cfg.regularizer, y, input.combined, kappa);
}

VectorXd energy_grad(const DiffusionModel& model, const VectorXd& y, const RefinementInput& input,
                     const RefinementConfig& cfg, int tau, double kappa, const Window& eps) {
  check_input(model, input);
  check_step(tau, model.schedule);
  const VectorXd* ys[1] = {&y};
  const RefinementInput* ins[1] = {&input};
  const MatrixXd prior = prior_grad(model, tau, ys, ins, {&eps, 1}, nullptr);
  return prior.col(0) + cfg.lambda * reg_grad(cfg.regularizer, y, input.combined, kappa);
}

VectorXd refine_path(const DiffusionModel& model, const RefinementInput& input, const RefinementConfig& cfg,
                     double kappa, std::mt19937_64& rng) {
  const int tau = cfg.resolve_tau(model);
  check_input(model, input);
  PathState p{input.combined, &input, kappa, &rng};
  run_paths(model, cfg, tau, {&p, 1});
  return p.y;
}

VectorXd refine(const DiffusionModel& model, const RefinementInput& input, const RefinementConfig& cfg,
                std::uint64_t seed) {
  auto rng = stream_rng(seed, 0);
  const VectorXd y = refine_path(model, input, cfg, 0.5, rng);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!input.observed[i]) out.push_back(y[i] * input.scale);
  }
  return Eigen::Map<VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

ForecastEnsemble refine_ensemble(const DiffusionModel& model, const VectorXd& window, const std::vector<bool>& observed,
                                 double scale, const ForecastEnsemble& base, const RefinementConfig& cfg,
                                 std::uint64_t seed, const Window& lags) {
  const int tau = cfg.resolve_tau(model);
  if (!(scale > 0.0)) throw ParameterError("refinement scale must be positive");
  std::vector<int> targets;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (!observed[i]) targets.push_back(static_cast<int>(i));
  }
  if (targets != base.indices) throw ShapeError("refinement: base forecast does not cover the target entries");
  const int n = static_cast<int>(base.num_samples());
  if (n < 1) throw ParameterError("refinement: empty base ensemble");
  const std::vector<double> kappas = assign_quantile_levels(n);
  const VectorXd norm_window = window / scale;
  const Window norm_lags = lags.size() ? Window(lags / scale) : Window();

  std::vector<RefinementInput> inputs(n);
  std::vector<std::mt19937_64> rngs(n);
  std::vector<PathState> paths(n);
  for (int i = 0; i < n; ++i) {
    inputs[i] = combine_with_base(norm_window, observed, base.samples.row(i).transpose() / scale, scale, norm_lags);
    check_input(model, inputs[i]);
    rngs[i] = stream_rng(seed, static_cast<std::uint64_t>(i));
    paths[i] = PathState{inputs[i].combined, &inputs[i], kappas[i], &rngs[i]};
  }
  const int chunk = cfg.path_chunk;
  const int n_chunks = (n + chunk - 1) / chunk;
  parallel_for(static_cast<std::size_t>(n_chunks), [&](std::size_t c) {
    const int lo = static_cast<int>(c) * chunk;
    const int hi = std::min(n, lo + chunk);
    run_paths(model, cfg, tau, std::span<PathState>(paths.data() + lo, hi - lo));
  });

  ForecastEnsemble out;
  out.item_id = base.item_id;
  out.window_start = base.window_start;
  out.indices = targets;
  out.samples.resize(n, static_cast<Eigen::Index>(targets.size()));
  for (int i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < targets.size(); ++k) out.samples(i, static_cast<Eigen::Index>(k)) = paths[i].y[targets[k]] * scale;
  }
  return out;
}

}  // namespace tsdiff

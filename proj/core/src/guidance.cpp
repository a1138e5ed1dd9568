#include "tsdiff/guidance.hpp"

#include <cmath>
#include <sstream>

#include "tsdiff/errors.hpp"
#include "tsdiff/parallel.hpp"
#include "tsdiff/rng.hpp"

namespace tsdiff {
namespace {

using Eigen::MatrixXd;

// Packed (C x B*L) observation indicator and values.
struct PackedObservations {
  MatrixXd indicator;
  MatrixXd values;
};

PackedObservations pack_mask(const ObservationMask& mask, int copies) {
  const Window ind = mask.indicator();
  PackedObservations p;
  p.indicator.resize(mask.channels(), mask.length() * copies);
  p.values.resize(mask.channels(), mask.length() * copies);
  for (int b = 0; b < copies; ++b) {
    p.indicator.middleCols(b * mask.length(), mask.length()) = ind.transpose();
    p.values.middleCols(b * mask.length(), mask.length()) = mask.values.transpose();
  }
  return p;
}

// d log p / d f for each entry, zero outside obs. kappas holds one level per
// window (ignored for mean-square).
MatrixXd log_density_grad(GuidanceVariant variant, const MatrixXd& f, const PackedObservations& obs,
                          std::span<const double> kappas, Eigen::Index length) {
  const MatrixXd r = obs.values - f;
  if (variant == GuidanceVariant::MeanSquare) return (r.array() * obs.indicator.array()).matrix();
  MatrixXd g(r.rows(), r.cols());
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    const double kappa = kappas[j / length];
    for (Eigen::Index c = 0; c < r.rows(); ++c) {
      const double res = r(c, j);
      const double slope = res > 0.0 ? kappa : (res < 0.0 ? kappa - 1.0 : 0.0);
      g(c, j) = obs.indicator(c, j) != 0.0 ? slope : 0.0;
    }
  }
  return g;
}

// grad_x log p(y_obs | x_t) given the tape of eps_theta(x_t).
MatrixXd score_from_tape(const Denoiser& net, const DenoiserTape& tape, const MatrixXd& x, const MatrixXd& eps,
                         const NoiseSchedule& sched, int t, GuidanceVariant variant, const PackedObservations& obs,
                         std::span<const double> kappas) {
  const double ab = sched.alpha_bar(t);
  const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
  const MatrixXd f = (x - sb * eps) / sa;
  const MatrixXd g = log_density_grad(variant, f, obs, kappas, net.config().length);
  MatrixXd jtg;
  net.backward(tape, g, &jtg, {});
  return (g - sb * jtg) / sa;
}

// One guided reverse step on a packed batch, in place.
void guided_step_packed(const Denoiser& net, const NoiseSchedule& sched, MatrixXd& x, int t,
                        const PackedObservations* obs, GuidanceVariant variant, double scale,
                        std::span<const double> kappas, const MatrixXd* noise) {
  const Eigen::Index batch = x.cols() / net.config().length;
  const std::vector<int> steps(batch, t);
  const double sigma2 = sched.sigma2(t);
  const bool guide = obs != nullptr && scale != 0.0 && sigma2 != 0.0;
  DenoiserTape tape;
  const MatrixXd eps = net.forward_batch(x, steps, guide ? &tape : nullptr);
  const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  MatrixXd next = (x - coef * eps) / std::sqrt(sched.alpha(t));
  const double sigma = std::sqrt(sigma2);
  if (sigma != 0.0 && noise != nullptr) next += sigma * *noise;
  if (guide) next += (scale * sigma2) * score_from_tape(net, tape, x, eps, sched, t, variant, *obs, kappas);
  x = std::move(next);
}

void check_mask(const Denoiser& net, const ObservationMask& mask) {
  if (mask.length() != net.config().length || mask.channels() != net.config().input_channels) {
    throw ShapeError("guidance: mask shape does not match the model");
  }
  if (mask.observed_count() == 0) throw ParameterError("guidance: observation mask is empty");
}

void check_kappa(double kappa) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw ParameterError("quantile level must lie in (0, 1)");
}

Window single_score(const Denoiser& net, const NoiseSchedule& sched, const Window& x_t, int t,
                    const ObservationMask& mask, GuidanceVariant variant, double kappa) {
  check_step(t, sched);
  check_mask(net, mask);
  const MatrixXd x = pack_windows({&x_t, 1});
  const int steps[1] = {t};
  DenoiserTape tape;
  const MatrixXd eps = net.forward_batch(x, steps, &tape);
  const PackedObservations obs = pack_mask(mask, 1);
  const double kappas[1] = {kappa};
  return unpack_windows(score_from_tape(net, tape, x, eps, sched, t, variant, obs, kappas), x_t.rows()).front();
}

}  // namespace

GuidanceVariant parse_guidance_variant(const std::string& s) {
  if (s == "ms" || s == "mean-square") return GuidanceVariant::MeanSquare;
  if (s == "q" || s == "quantile") return GuidanceVariant::Quantile;
  throw ParameterError("unknown guidance variant '" + s + "' (expected ms or q)");
}

std::string to_string(GuidanceVariant v) { return v == GuidanceVariant::MeanSquare ? "ms" : "q"; }

void GuidanceConfig::validate() const {
  if (!(scale >= 0.0)) throw ParameterError("guidance scale must be non-negative");
  if (laplace_scale != 1.0) throw ParameterError("only Laplace scale b = 1 is supported");
  if (chain_chunk <= 0) throw ParameterError("chain_chunk must be positive");
  for (double k : quantile_levels) check_kappa(k);
}

std::vector<double> assign_quantile_levels(int n) {
  if (n < 1) throw ParameterError("need at least one quantile level");
  std::vector<double> levels(n);
  for (int i = 0; i < n; ++i) levels[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
  return levels;
}

Window ms_guidance_score(const Denoiser& net, const NoiseSchedule& sched, const Window& x_t, int t,
                         const ObservationMask& mask) {
  return single_score(net, sched, x_t, t, mask, GuidanceVariant::MeanSquare, 0.5);
}

Window quantile_guidance_score(const Denoiser& net, const NoiseSchedule& sched, const Window& x_t, int t,
                               const ObservationMask& mask, double kappa) {
  check_kappa(kappa);
  return single_score(net, sched, x_t, t, mask, GuidanceVariant::Quantile, kappa);
}

Window guided_reverse_step(const Denoiser& net, const NoiseSchedule& sched, const Window& x_t, int t,
                           const ObservationMask& mask, const GuidanceConfig& cfg, double kappa,
                           const Window& noise) {
  cfg.validate();
  check_step(t, sched);
  check_mask(net, mask);
  if (cfg.variant == GuidanceVariant::Quantile) check_kappa(kappa);
  if (noise.rows() != x_t.rows() || noise.cols() != x_t.cols()) throw ShapeError("guided_reverse_step: noise shape");
  MatrixXd x = pack_windows({&x_t, 1});
  const MatrixXd packed_noise = pack_windows({&noise, 1});
  const PackedObservations obs = pack_mask(mask, 1);
  const double kappas[1] = {kappa};
  guided_step_packed(net, sched, x, t, &obs, cfg.variant, cfg.scale, kappas, &packed_noise);
  return unpack_windows(x, x_t.rows()).front();
}

Eigen::MatrixXd sample_chains(const DiffusionModel& model, const std::optional<ObservationMask>& mask,
                              const GuidanceConfig& cfg, int n, std::uint64_t seed) {
  cfg.validate();
  if (n < 1) throw ParameterError("need at least one sample path");
  const Denoiser net = model.denoiser();
  if (mask) check_mask(net, *mask);
  std::vector<double> kappas = cfg.quantile_levels;
  if (kappas.empty()) kappas = assign_quantile_levels(n);
  if (static_cast<int>(kappas.size()) != n) throw ParameterError("quantile_levels must have one entry per chain");

  const Eigen::Index len = model.config.length;
  const Eigen::Index ch = model.config.input_channels;
  const int steps = model.schedule.steps();
  const int chunk = cfg.chain_chunk;
  const int n_chunks = (n + chunk - 1) / chunk;
  Eigen::MatrixXd out(n, len);

  parallel_for(static_cast<std::size_t>(n_chunks), [&](std::size_t ci) {
    const int lo = static_cast<int>(ci) * chunk;
    const int hi = std::min(n, lo + chunk);
    const int b = hi - lo;
    std::vector<std::mt19937_64> rngs;
    rngs.reserve(b);
    for (int i = lo; i < hi; ++i) rngs.push_back(stream_rng(seed, static_cast<std::uint64_t>(i)));
    // Per-chain distributions keep the streams independent of chunking.
    std::vector<std::normal_distribution<double>> normals(b);
    auto draw = [&](MatrixXd& dst) {
      for (int k = 0; k < b; ++k) {
        // Row-major draw order over the L x C window of chain k.
        for (Eigen::Index i = 0; i < len; ++i)
          for (Eigen::Index c = 0; c < ch; ++c) dst(c, k * len + i) = normals[k](rngs[k]);
      }
    };
    std::optional<PackedObservations> obs;
    if (mask) obs = pack_mask(*mask, b);
    std::span<const double> chunk_kappas(kappas.data() + lo, b);

    MatrixXd x(ch, b * len);
    draw(x);
    MatrixXd noise(ch, b * len);
    for (int t = steps; t >= 1; --t) {
      const MatrixXd* np = nullptr;
      if (t > 1) {
        draw(noise);
        np = &noise;
      }
      guided_step_packed(net, model.schedule, x, t, obs ? &*obs : nullptr, cfg.variant, cfg.scale, chunk_kappas, np);
      if (!x.allFinite()) {
        std::ostringstream msg;
        msg << "sampling diverged: non-finite state in chains " << lo << ".." << hi - 1 << " at step " << t;
        throw NumericError(msg.str());
      }
    }
    for (int k = 0; k < b; ++k) out.row(lo + k) = x.block(0, k * len, 1, len);
  });
  return out;
}

ForecastEnsemble self_guided_sample(const DiffusionModel& model, const ObservationMask& mask, double scale,
                                    const GuidanceConfig& cfg, int n, std::uint64_t seed) {
  const Eigen::MatrixXd full = sample_chains(model, mask, cfg, n, seed);
  ForecastEnsemble e;
  for (Eigen::Index i = 0; i < mask.length(); ++i) {
    if (!mask.observed(i, 0)) e.indices.push_back(static_cast<int>(i));
  }
  e.samples.resize(n, static_cast<Eigen::Index>(e.indices.size()));
  for (std::size_t k = 0; k < e.indices.size(); ++k) e.samples.col(static_cast<Eigen::Index>(k)) = full.col(e.indices[k]) * scale;
  return e;
}

}  // namespace tsdiff

#include "tsdiff/training.hpp"

#include <cmath>
#include <sstream>

#include "tsdiff/checkpoint.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/parallel.hpp"

namespace tsdiff {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size <= 0 || epochs <= 0 || batches_per_epoch <= 0 || !(grad_clip > 0.0) ||
      microbatch <= 0) {
    throw ParameterError("train config: learning rate, batch sizes, epochs and clip threshold must be positive");
  }
}

AdamState::AdamState(std::size_t n, double beta1, double beta2, double eps)
    : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamState::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double clip_global_norm(std::vector<double>& grad, double threshold) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > threshold) {
    const double f = threshold / norm;
    for (double& g : grad) g *= f;
  }
  return norm;
}

TrainResult train(const DenoiserConfig& model_cfg, DenoiserParams params, const WindowSampler& sampler,
                  const NoiseSchedule& sched, const TrainConfig& cfg,
                  const std::function<void(int, double)>& on_epoch) {
  cfg.validate();
  model_cfg.validate();
  const auto n_params = static_cast<std::size_t>(parameter_count(model_cfg));
  if (params.values.size() != n_params) throw ShapeError("train: parameter vector does not match config");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick_step(1, sched.steps());
  std::normal_distribution<double> normal(0.0, 1.0);
  AdamState adam(n_params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  const int batch = cfg.batch_size;
  const int n_chunks = (batch + cfg.microbatch - 1) / cfg.microbatch;
  const Eigen::Index len = model_cfg.length;
  const Eigen::Index ch = model_cfg.input_channels;
  const double norm = 1.0 / static_cast<double>(batch * len * ch);

  std::vector<Window> noisy(batch), eps(batch);
  std::vector<int> steps(batch);
  std::vector<TrainingWindow> windows(batch);
  // Eigen-owned buffers keep the gradient arithmetic independent of heap addresses.
  std::vector<Eigen::VectorXd> chunk_grad(n_chunks, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params)));
  std::vector<double> chunk_sq(n_chunks);
  std::vector<double> grad(n_params);

  TrainResult result;
  long long global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int it = 0; it < cfg.batches_per_epoch; ++it, ++global_step) {
      for (int b = 0; b < batch; ++b) {
        windows[b] = sampler.sample(rng);
        if (windows[b].x.rows() != len || windows[b].x.cols() != ch) {
          throw ShapeError("train: sampled window does not match the model shape");
        }
        steps[b] = pick_step(rng);
        eps[b] = Window::NullaryExpr(len, ch, [&]() { return normal(rng); });
        noisy[b] = forward_sample(windows[b].x, steps[b], eps[b], sched);
      }

      const Denoiser net(model_cfg, params.values);
      parallel_for(static_cast<std::size_t>(n_chunks), [&](std::size_t c) {
        const int lo = static_cast<int>(c) * cfg.microbatch;
        const int hi = std::min(batch, lo + cfg.microbatch);
        std::span<const Window> xs(noisy.data() + lo, hi - lo);
        std::span<const int> ts(steps.data() + lo, hi - lo);
        DenoiserTape tape;
        const Eigen::MatrixXd pred = net.forward_batch(pack_windows(xs), ts, &tape);
        const Eigen::MatrixXd resid = pred - pack_windows(std::span<const Window>(eps.data() + lo, hi - lo));
        chunk_sq[c] = resid.squaredNorm();
        chunk_grad[c].setZero();
        net.backward(tape, (2.0 * norm) * resid, nullptr, {chunk_grad[c].data(), n_params});
      });

      double sq = 0.0;
      std::fill(grad.begin(), grad.end(), 0.0);
      for (int c = 0; c < n_chunks; ++c) {
        sq += chunk_sq[c];
        for (std::size_t i = 0; i < n_params; ++i) grad[i] += chunk_grad[c][i];
      }
      const double loss = sq * norm;
      if (!std::isfinite(loss)) {
        // Locate the first offending window for the diagnostic.
        int bad = 0;
        for (int b = 0; b < batch; ++b) {
          if (!net.forward(noisy[b], steps[b]).allFinite()) {
            bad = b;
            break;
          }
        }
        std::ostringstream msg;
        msg << "training loss is not finite at step " << global_step << " (t=" << steps[bad]
            << ", series " << windows[bad].series << ", offset " << windows[bad].offset << ")";
        throw NumericError(msg.str());
      }
      clip_global_norm(grad, cfg.grad_clip);
      adam.step(params.values, grad, cfg.learning_rate);
      epoch_loss += loss;
    }
    epoch_loss /= cfg.batches_per_epoch;
    result.loss_history.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  round_params_to_float(params);
  result.params = std::move(params);
  return result;
}

}  // namespace tsdiff

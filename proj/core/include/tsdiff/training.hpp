#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tsdiff/data.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/schedule.hpp"

namespace tsdiff {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 1000;
  int batches_per_epoch = 128;
  double grad_clip = 0.5;  ///< global L2-norm threshold
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  /// Windows per gradient work item. Fixed independently of the thread
  /// count so the gradient reduction order never changes.
  int microbatch = 8;

  void validate() const;
};

struct TrainResult {
  DenoiserParams params;
  std::vector<double> loss_history;  ///< mean loss per epoch
};

/// Adam with bias correction.
class AdamState {
 public:
  AdamState(std::size_t n, double beta1, double beta2, double eps);
  /// Applies one update to `params` using gradient `grad`.
  void step(std::vector<double>& params, const std::vector<double>& grad, double lr);

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_;
  long long t_ = 0;
};

/// Rescales `grad` in place so its L2 norm is at most `threshold`; returns
/// the norm before clipping.
double clip_global_norm(std::vector<double>& grad, double threshold);

/// Minimises the denoising loss. Each step draws `batch_size` windows, a
/// step t ~ U{1..T} and eps ~ N(0, I) per window, and takes one clipped Adam
/// step. Raises NumericError if the loss becomes non-finite. The returned
/// parameters are rounded to float precision to match the checkpoint format.
TrainResult train(const DenoiserConfig& model_cfg, DenoiserParams params, const WindowSampler& sampler,
                  const NoiseSchedule& sched, const TrainConfig& cfg,
                  const std::function<void(int epoch, double loss)>& on_epoch = {});

}  // namespace tsdiff

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsdiff/data.hpp"
#include "tsdiff/forecast_io.hpp"
#include "tsdiff/guidance.hpp"
#include "tsdiff/refine.hpp"
#include "tsdiff/training.hpp"

// Dataset-level drivers shared by the command-line tool and the acceptance
// harness. Each series is forecast on its final context + horizon window.

namespace tsdiff {

struct ModelSpec {
  DenoiserConfig denoiser;  ///< length and input_channels are filled in from the lengths and lags
  int diffusion_steps = 100;
  double beta_1 = 1e-4;
  double beta_T = 0.1;
  int context_length = 0;
  int prediction_length = 0;
  std::vector<int> lags;
  std::string freq = "H";
};

struct TrainOptions {
  TrainConfig train;
  std::uint64_t init_seed = 0;
  /// Drop the last prediction_length values of each series before training.
  bool holdout = true;
  /// Windows used for the representative step and the training-scale table.
  int tau_windows = 1024;
};

struct TrainOutcome {
  DiffusionModel model;
  std::vector<double> loss_history;
  std::vector<double> step_losses;
};

TrainOutcome train_model(const Dataset& data, const ModelSpec& spec, const TrainOptions& opts,
                         const std::function<void(int, double)>& on_epoch = {});

/// `count` normalized training windows drawn from stream (seed, stream) and
/// their scales, from the same split train_model uses.
struct WindowBatch {
  std::vector<Window> windows;
  std::vector<double> scales;
};
WindowBatch draw_training_windows(const Dataset& data, const DiffusionModel& model, bool holdout, int count,
                                  std::uint64_t seed, std::uint64_t stream);

struct ForecastOptions {
  GuidanceConfig guidance;
  int samples = 100;
  MissingScenario missing = MissingScenario::None;
  double missing_ratio = 0.0;
  bool guide_lags = true;
  std::uint64_t seed = 0;
};

/// Self-guided forecast of the last prediction_length values of every
/// series. Series i uses stream (seed, i) for its mask and chains.
std::vector<ForecastRecord> forecast_dataset(const DiffusionModel& model, const Dataset& data,
                                             const ForecastOptions& opts);

/// Point baselines lifted to `samples` identical paths.
std::vector<ForecastRecord> seasonal_naive_forecasts(const Dataset& data, int context, int horizon, int season,
                                                     int samples);
/// Ridge on mean-scaled windows: fitted on every length context + horizon
/// slice of the series with the last `horizon` values held out.
std::vector<ForecastRecord> linear_forecasts(const Dataset& data, int context, int horizon, double alpha,
                                             int samples);

/// Refines each record against its window in `data`. Record i uses
/// stream (seed, i).
std::vector<ForecastRecord> refine_forecasts(const DiffusionModel& model, const Dataset& data,
                                             const std::vector<ForecastRecord>& base, const RefinementConfig& cfg,
                                             std::uint64_t seed);

/// Unconditional windows in original units. Scales are resampled from the
/// model's training-scale table.
SamplesFile synthesize(const DiffusionModel& model, int count, std::uint64_t seed);

EvaluationReport evaluate_crps(const std::vector<ForecastRecord>& records, const Dataset& data);
/// Ridge trained on the synthetic windows, scored on the last window of
/// every real series.
EvaluationReport evaluate_lps(const std::vector<Eigen::VectorXd>& synthetic, const Dataset& data, int context,
                              int horizon, double alpha = 1.0);

}  // namespace tsdiff

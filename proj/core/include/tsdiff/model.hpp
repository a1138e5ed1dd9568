#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tsdiff/denoiser.hpp"
#include "tsdiff/schedule.hpp"

namespace tsdiff {

/// Facts about how a model was trained that inference needs later.
struct TrainMetadata {
  int context_length = 0;
  int prediction_length = 0;
  std::string freq = "H";
  std::vector<int> lags;
  // Training protocol echo.
  double learning_rate = 0.0;
  int batch_size = 0;
  int epochs = 0;
  int batches_per_epoch = 0;
  double grad_clip = 0.0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  /// Representative diffusion step for refinement; 0 when not computed.
  int representative_step = 0;
  /// Empirical mean-scale values of training windows, used to de-normalize
  /// unconditional samples.
  std::vector<double> train_scales;
  /// Resolved settings of the run that produced the checkpoint.
  std::map<std::string, std::string> provenance;

  bool operator==(const TrainMetadata&) const = default;
};

/// Denoiser parameters plus everything needed to run the diffusion process.
struct DiffusionModel {
  DenoiserConfig config;
  DenoiserParams params;
  NoiseSchedule schedule;
  TrainMetadata meta;

  Denoiser denoiser() const { return Denoiser(config, params.values); }
};

}  // namespace tsdiff

#include "tsdiff/pipeline.hpp"

#include <algorithm>
#include <map>

#include "tsdiff/baselines.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/metrics.hpp"
#include "tsdiff/rng.hpp"

namespace tsdiff {
namespace {

using Eigen::VectorXd;

struct Lengths {
  int context = 0;
  int horizon = 0;
  int window = 0;
};

Lengths model_lengths(const DiffusionModel& model) {
  const auto& m = model.meta;
  if (m.context_length <= 0 || m.prediction_length <= 0 || m.context_length + m.prediction_length != model.config.length) {
    throw ParameterError("checkpoint does not record context/prediction lengths matching the model window");
  }
  return {m.context_length, m.prediction_length, model.config.length};
}

int max_lag(const std::vector<int>& lags) { return lags.empty() ? 0 : *std::max_element(lags.begin(), lags.end()); }

// Offset of the final window of a series, checked against the lag history.
std::ptrdiff_t final_offset(const TimeSeries& s, int window, int history) {
  const auto n = static_cast<std::ptrdiff_t>(s.values.size());
  if (n < window + history) {
    throw ParameterError("series '" + s.item_id + "' has " + std::to_string(n) + " values; need " +
                         std::to_string(window + history));
  }
  return n - window;
}

std::vector<int> iota(int lo, int hi) {
  std::vector<int> v;
  for (int i = lo; i < hi; ++i) v.push_back(i);
  return v;
}

ForecastRecord point_record(const TimeSeries& s, std::ptrdiff_t offset, int context, int horizon,
                            const VectorXd& point, int samples) {
  ForecastRecord r;
  r.ensemble = replicate_point_forecast(point, samples, iota(context, context + horizon));
  r.ensemble.item_id = s.item_id;
  r.ensemble.window_start = offset;
  r.window_length = context + horizon;
  r.observed = iota(0, context);
  return r;
}

std::map<std::string, const TimeSeries*> index_series(const Dataset& data) {
  std::map<std::string, const TimeSeries*> by_id;
  for (const auto& s : data.series) {
    if (!by_id.emplace(s.item_id, &s).second) throw ParameterError("duplicate item_id '" + s.item_id + "' in dataset");
  }
  return by_id;
}

// Looks up every record's series, naming all the ids that fail.
std::vector<const TimeSeries*> align(const std::vector<ForecastRecord>& records, const Dataset& data) {
  const auto by_id = index_series(data);
  std::vector<const TimeSeries*> out;
  std::string bad;
  for (const auto& r : records) {
    const auto it = by_id.find(r.ensemble.item_id);
    const TimeSeries* s = it == by_id.end() ? nullptr : it->second;
    bool ok = s != nullptr && r.ensemble.window_start >= 0;
    if (ok) {
      const long long end = r.ensemble.window_start + r.window_length;
      ok = end <= static_cast<long long>(s->values.size());
      for (int idx : r.ensemble.indices) ok = ok && idx >= 0 && idx < r.window_length;
    }
    if (!ok) bad += (bad.empty() ? "" : ", ") + r.ensemble.item_id;
    out.push_back(s);
  }
  if (!bad.empty()) throw ShapeError("forecast records do not align with the dataset: " + bad);
  return out;
}

}  // namespace

WindowBatch draw_training_windows(const Dataset& data, const DiffusionModel& model, bool holdout, int count,
                                  std::uint64_t seed, std::uint64_t stream) {
  const Lengths len = model_lengths(model);
  const Dataset split = holdout ? drop_last(data, len.horizon) : data;
  const WindowSampler sampler(split, len.window, len.context, model.meta.lags);
  auto rng = stream_rng(seed, stream);
  WindowBatch b;
  for (int i = 0; i < count; ++i) {
    TrainingWindow w = sampler.sample(rng);
    b.windows.push_back(std::move(w.x));
    b.scales.push_back(w.scale);
  }
  return b;
}

TrainOutcome train_model(const Dataset& data, const ModelSpec& spec, const TrainOptions& opts,
                         const std::function<void(int, double)>& on_epoch) {
  if (spec.context_length <= 0 || spec.prediction_length <= 0) {
    throw ParameterError("context_length and prediction_length must be positive");
  }
  if (opts.tau_windows < 1) throw ParameterError("tau_windows must be positive");
  DiffusionModel model;
  model.config = spec.denoiser;
  model.config.length = spec.context_length + spec.prediction_length;
  model.config.input_channels = 1 + static_cast<int>(spec.lags.size());
  model.config.validate();
  model.schedule = build_linear_schedule(spec.diffusion_steps, spec.beta_1, spec.beta_T);

  auto& m = model.meta;
  m.context_length = spec.context_length;
  m.prediction_length = spec.prediction_length;
  m.freq = spec.freq;
  m.lags = spec.lags;
  m.learning_rate = opts.train.learning_rate;
  m.batch_size = opts.train.batch_size;
  m.epochs = opts.train.epochs;
  m.batches_per_epoch = opts.train.batches_per_epoch;
  m.grad_clip = opts.train.grad_clip;
  m.seed = opts.train.seed;

  const Dataset split = opts.holdout ? drop_last(data, spec.prediction_length) : data;
  const WindowSampler sampler(split, model.config.length, spec.context_length, spec.lags);
  TrainResult tr = train(model.config, init_params(model.config, opts.init_seed), sampler, model.schedule, opts.train,
                         on_epoch);
  model.params = std::move(tr.params);
  m.final_loss = tr.loss_history.empty() ? 0.0 : tr.loss_history.back();

  // Stream 1 is disjoint from the training generator, which is seeded directly.
  const WindowBatch batch = draw_training_windows(data, model, opts.holdout, opts.tau_windows, opts.train.seed, 1);
  TrainOutcome out;
  out.step_losses = per_step_losses(model, batch.windows, opts.train.seed);
  m.representative_step = representative_step_from_losses(out.step_losses);
  m.train_scales = batch.scales;
  out.model = std::move(model);
  out.loss_history = std::move(tr.loss_history);
  return out;
}

std::vector<ForecastRecord> forecast_dataset(const DiffusionModel& model, const Dataset& data,
                                             const ForecastOptions& opts) {
  const Lengths len = model_lengths(model);
  if (opts.samples < 1) throw ParameterError("samples must be positive");
  opts.guidance.validate();
  const auto& lags = model.meta.lags;
  std::vector<ForecastRecord> out(data.series.size());
  for (std::size_t i = 0; i < data.series.size(); ++i) {
    const TimeSeries& s = data.series[i];
    const std::ptrdiff_t offset = final_offset(s, len.window, max_lag(lags));
    auto rng = stream_rng(opts.seed, i);
    const std::uint64_t chain_seed = rng();
    ObservationMask base = make_missing_mask(opts.missing, opts.missing_ratio, len.context, len.horizon, rng);

    const Window raw = build_lag_matrix(s.values, offset, len.window, lags);
    std::vector<bool> obs(len.window);
    for (int k = 0; k < len.window; ++k) obs[k] = base.observed(k, 0);
    const VectorXd target = raw.col(0);
    const double scale = mean_scale_observed({target.data(), static_cast<std::size_t>(target.size())}, obs).scale;
    const ObservationMask mask = observe(extend_mask_to_lags(base, lags, opts.guide_lags), raw / scale);

    ForecastRecord& r = out[i];
    r.ensemble = self_guided_sample(model, mask, scale, opts.guidance, opts.samples, chain_seed).tail_from(len.context);
    r.ensemble.item_id = s.item_id;
    r.ensemble.window_start = offset;
    r.window_length = len.window;
    for (int k = 0; k < len.window; ++k) {
      if (obs[k]) r.observed.push_back(k);
    }
  }
  return out;
}

std::vector<ForecastRecord> seasonal_naive_forecasts(const Dataset& data, int context, int horizon, int season,
                                                     int samples) {
  std::vector<ForecastRecord> out;
  for (const auto& s : data.series) {
    const std::ptrdiff_t offset = final_offset(s, context + horizon, 0);
    const std::span<const double> ctx(s.values.data() + offset, static_cast<std::size_t>(context));
    out.push_back(point_record(s, offset, context, horizon, seasonal_naive(ctx, season, horizon), samples));
  }
  return out;
}

std::vector<ForecastRecord> linear_forecasts(const Dataset& data, int context, int horizon, double alpha,
                                             int samples) {
  const int window = context + horizon;
  std::vector<VectorXd> train;
  for (const auto& s : drop_last(data, horizon).series) {
    for (std::size_t o = 0; o + window <= s.values.size(); ++o) {
      train.push_back(Eigen::Map<const VectorXd>(s.values.data() + o, window));
    }
  }
  if (train.empty()) throw ParameterError("linear baseline: no training windows of length " + std::to_string(window));
  const RidgeModel ridge = fit_windowed_ridge(train, context, horizon, alpha);
  std::vector<ForecastRecord> out;
  for (const auto& s : data.series) {
    const std::ptrdiff_t offset = final_offset(s, window, 0);
    const VectorXd ctx = Eigen::Map<const VectorXd>(s.values.data() + offset, context);
    out.push_back(point_record(s, offset, context, horizon, ridge.forecast(ctx), samples));
  }
  return out;
}

std::vector<ForecastRecord> refine_forecasts(const DiffusionModel& model, const Dataset& data,
                                             const std::vector<ForecastRecord>& base, const RefinementConfig& cfg,
                                             std::uint64_t seed) {
  const auto series = align(base, data);
  const auto& lags = model.meta.lags;
  std::vector<ForecastRecord> out;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const ForecastRecord& r = base[i];
    const TimeSeries& s = *series[i];
    if (r.window_length != model.config.length) {
      throw ShapeError("record '" + r.ensemble.item_id + "' has window length " + std::to_string(r.window_length) +
                       " but the model expects " + std::to_string(model.config.length));
    }
    const Window raw = build_lag_matrix(s.values, r.ensemble.window_start, r.window_length, lags);
    std::vector<bool> obs(r.window_length, false);
    for (int k : r.observed) {
      if (k < 0 || k >= r.window_length) throw ShapeError("record '" + r.ensemble.item_id + "': observed index");
      obs[k] = true;
    }
    const VectorXd window = raw.col(0);
    const double scale = mean_scale_observed({window.data(), static_cast<std::size_t>(window.size())}, obs).scale;
    const Window lag_cols = lags.empty() ? Window() : Window(raw.rightCols(raw.cols() - 1));
    const std::uint64_t path_seed = stream_rng(seed, i)();
    ForecastRecord refined = r;
    refined.ensemble = refine_ensemble(model, window, obs, scale, r.ensemble, cfg, path_seed, lag_cols);
    out.push_back(std::move(refined));
  }
  return out;
}

SamplesFile synthesize(const DiffusionModel& model, int count, std::uint64_t seed) {
  if (count < 0) throw ParameterError("sample count must be non-negative");
  SamplesFile f;
  if (count == 0) return f;
  GuidanceConfig cfg;
  cfg.scale = 0.0;
  const Eigen::MatrixXd x = sample_chains(model, std::nullopt, cfg, count, seed);
  const auto& table = model.meta.train_scales;
  // The chains use streams 0..count-1 of `seed`; scales come from a separate generator.
  auto rng = stream_rng(~seed, 0);
  std::uniform_int_distribution<std::size_t> pick(0, table.empty() ? 0 : table.size() - 1);
  for (int i = 0; i < count; ++i) {
    const double scale = table.empty() ? 1.0 : table[pick(rng)];
    f.windows.push_back(x.row(i).transpose() * scale);
    f.scales.push_back(scale);
  }
  return f;
}

EvaluationReport evaluate_crps(const std::vector<ForecastRecord>& records, const Dataset& data) {
  if (records.empty()) throw ParameterError("evaluate: no forecast records");
  const auto series = align(records, data);
  std::vector<ForecastEnsemble> fc;
  std::vector<VectorXd> actual;
  EvaluationReport rep;
  rep.metric = "crps";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& e = records[i].ensemble;
    VectorXd y(e.num_targets());
    for (Eigen::Index k = 0; k < y.size(); ++k) y[k] = series[i]->values[e.window_start + e.indices[k]];
    const CrpsTerms t = crps_terms(e, {y.data(), static_cast<std::size_t>(y.size())});
    const double den = static_cast<double>(standard_quantile_levels().size()) * t.abs_target;
    rep.per_series.emplace_back(e.item_id, den > 0.0 ? t.weighted_loss / den : 0.0);
    fc.push_back(e);
    actual.push_back(std::move(y));
  }
  rep.aggregate = aggregate_crps(fc, actual);
  return rep;
}

EvaluationReport evaluate_lps(const std::vector<VectorXd>& synthetic, const Dataset& data, int context, int horizon,
                              double alpha) {
  const std::vector<VectorXd> test = last_windows(data, context + horizon);
  for (const auto& w : synthetic) {
    if (w.size() != context + horizon) {
      throw ShapeError("lps: synthetic window length " + std::to_string(w.size()) + " but context + horizon is " +
                       std::to_string(context + horizon));
    }
  }
  EvaluationReport rep;
  rep.metric = "lps";
  rep.aggregate = lps(synthetic, test, context, horizon, alpha);
  const RidgeModel ridge = fit_windowed_ridge(synthetic, context, horizon, alpha);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const VectorXd pred = ridge.forecast(test[i].head(context));
    const VectorXd y = test[i].tail(horizon);
    const double den = y.cwiseAbs().sum();
    rep.per_series.emplace_back(data.series[i].item_id, den > 0.0 ? (pred - y).cwiseAbs().sum() / den : 0.0);
  }
  return rep;
}

}  // namespace tsdiff

// tsdiff command-line tool. See README.md for the config-file grammar.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsdiff/checkpoint.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/parallel.hpp"
#include "tsdiff/pipeline.hpp"

namespace {

using namespace tsdiff;
using json = nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

// Every option of `sub` (set or defaulted) keyed by its long name, plus the
// command name. Paths are echoed verbatim.
Provenance provenance(const CLI::App& sub) {
  Provenance p;
  p["command"] = sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    std::string v;
    if (opt->get_expected_min() == 0) {
      v = opt->count() ? "true" : "false";  // flag
    } else {
      v = opt->count() ? opt->as<std::string>() : opt->get_default_str();
    }
    // Vector options come back bracketed; keep them comma separated.
    if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    p[opt->get_lnames().front()] = v;
  }
  return p;
}

std::vector<int> parse_lags(const std::string& spec, const std::string& freq, int context) {
  if (spec == "none" || spec.empty()) return {};
  if (spec == "default") return default_lags(freq, context);
  std::vector<int> lags;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
      lags.push_back(v);
    } catch (const std::exception&) {
      throw ParameterError("--lags: expected none, default, or a comma-separated list of positive integers");
    }
  }
  return lags;
}

// Non-positive lengths fall back to the frequency defaults.
std::pair<int, int> resolve_lengths(int context, int prediction, const std::string& freq) {
  if (context > 0 && prediction > 0) return {context, prediction};
  const auto d = default_lengths(freq);
  return {context > 0 ? context : d.first, prediction > 0 ? prediction : d.second};
}

std::vector<ForecastRecord> read_records(const std::string& path) { return read_forecast_file(path).records; }

void write_records(const std::string& path, const Provenance& cfg, std::vector<ForecastRecord> records) {
  write_forecast_file(ForecastFile{cfg, std::move(records)}, path);
}

// --- synth-data -----------------------------------------------------------

struct SynthArgs {
  std::string kind = "sine-mixture";
  int series = 64;
  int length = 480;
  SynthParams params;
  std::uint64_t seed = 0;
  std::string out;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth-data", "Write a synthetic JSON-lines dataset");
  c->add_option("--kind", a.kind, "sine-mixture, ar1 or seasonal-noise")->capture_default_str();
  c->add_option("--series", a.series)->capture_default_str();
  c->add_option("--length", a.length)->capture_default_str();
  c->add_option("--periods", a.params.periods)->delimiter(',')->capture_default_str();
  c->add_option("--amplitude-min", a.params.amplitude_min)->capture_default_str();
  c->add_option("--amplitude-max", a.params.amplitude_max)->capture_default_str();
  c->add_option("--level", a.params.level)->capture_default_str();
  c->add_option("--noise", a.params.noise_std)->capture_default_str();
  c->add_option("--ar", a.params.ar_coefficient)->capture_default_str();
  c->add_option("--season", a.params.season)->capture_default_str();
  c->add_option("--freq", a.params.freq)->capture_default_str();
  c->add_option("--start", a.params.start)->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("-o,--out", a.out)->required();
  c->callback([&a] {
    write_jsonl(synth_generate(parse_synth_kind(a.kind), a.params, a.series, a.length, a.seed), a.out);
  });
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data, out, loss_history, lags = "none";
  int context = 0, prediction = 0;
  ModelSpec spec;
  TrainOptions opts;
  bool no_holdout = false;
  bool quiet = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train the unconditional diffusion model");
  c->add_option("--data", a.data, "JSON-lines training dataset")->required()->check(CLI::ExistingFile);
  c->add_option("-o,--out", a.out, "checkpoint path")->required();
  c->add_option("--loss-history", a.loss_history, "defaults to <out>.loss.jsonl");
  c->add_option("--context-length", a.context, "0 = frequency default")->capture_default_str();
  c->add_option("--prediction-length", a.prediction, "0 = frequency default")->capture_default_str();
  c->add_option("--lags", a.lags, "none, default, or a comma-separated list")->capture_default_str();
  c->add_option("--residual-layers", a.spec.denoiser.residual_layers)->capture_default_str();
  c->add_option("--hidden", a.spec.denoiser.hidden)->capture_default_str();
  c->add_option("--time-emb-dim", a.spec.denoiser.time_emb_dim)->capture_default_str();
  c->add_option("--skip-input-to-output", a.spec.denoiser.skip_input_to_output)->capture_default_str();
  c->add_option("--diffusion-steps", a.spec.diffusion_steps)->capture_default_str();
  c->add_option("--beta-start", a.spec.beta_1)->capture_default_str();
  c->add_option("--beta-end", a.spec.beta_T)->capture_default_str();
  c->add_option("--learning-rate", a.opts.train.learning_rate)->capture_default_str();
  c->add_option("--batch-size", a.opts.train.batch_size)->capture_default_str();
  c->add_option("--epochs", a.opts.train.epochs)->capture_default_str();
  c->add_option("--batches-per-epoch", a.opts.train.batches_per_epoch)->capture_default_str();
  c->add_option("--grad-clip", a.opts.train.grad_clip)->capture_default_str();
  c->add_option("--tau-windows", a.opts.tau_windows, "windows for the representative step")->capture_default_str();
  c->add_option("--seed", a.opts.train.seed)->capture_default_str();
  c->add_option("--init-seed", a.opts.init_seed)->capture_default_str();
  c->add_flag("--no-holdout", a.no_holdout, "train on the full series, including the evaluation horizon");
  c->add_flag("-q,--quiet", a.quiet);
  c->callback([c, &a] {
    const Dataset data = load_jsonl(a.data);
    if (data.series.empty()) throw ParameterError("--data: dataset is empty");
    a.spec.freq = data.series.front().freq;
    const auto [ctx, pred] = resolve_lengths(a.context, a.prediction, a.spec.freq);
    a.spec.context_length = ctx;
    a.spec.prediction_length = pred;
    a.spec.lags = parse_lags(a.lags, a.spec.freq, ctx);
    a.opts.holdout = !a.no_holdout;

    Provenance cfg = provenance(*c);
    cfg["resolved.context_length"] = std::to_string(ctx);
    cfg["resolved.prediction_length"] = std::to_string(pred);
    TrainOutcome r = train_model(data, a.spec, a.opts, [&](int epoch, double loss) {
      if (!a.quiet) std::clog << "epoch " << epoch << " loss " << loss << '\n';
    });
    r.model.meta.provenance = cfg;
    save_checkpoint(r.model, a.out);

    std::ofstream hist(a.loss_history.empty() ? a.out + ".loss.jsonl" : a.loss_history);
    if (!hist) throw std::runtime_error("cannot write loss history");
    hist << json{{"format", "tsdiff-loss"}, {"version", kFileFormatVersion}, {"config", cfg}}.dump() << '\n';
    for (std::size_t e = 0; e < r.loss_history.size(); ++e) hist << json{{"epoch", e}, {"loss", r.loss_history[e]}}.dump() << '\n';
    hist << json{{"step_losses", r.step_losses}, {"representative_step", r.model.meta.representative_step}}.dump()
         << '\n';
  });
}

// --- forecast -------------------------------------------------------------

struct ForecastArgs {
  std::string model, data, out, variant = "q", missing = "none";
  double scale = 4.0;
  bool scale_set = false;
  ForecastOptions opts;
  bool no_guide_lags = false;
};

void add_forecast(CLI::App& app, ForecastArgs& a) {
  auto* c = app.add_subcommand("forecast", "Self-guided probabilistic forecasts");
  c->add_option("--model", a.model)->required()->check(CLI::ExistingFile);
  c->add_option("--data", a.data)->required()->check(CLI::ExistingFile);
  c->add_option("-o,--out", a.out)->required();
  c->add_option("--variant", a.variant, "ms or q")->capture_default_str();
  auto* scale = c->add_option("--scale", a.scale, "guidance scale; defaults to 4 (q) or 4/32 (ms)");
  c->add_option("--samples", a.opts.samples)->capture_default_str();
  c->add_option("--missing", a.missing, "none, rm, bm-b or bm-e")->capture_default_str();
  c->add_option("--ratio", a.opts.missing_ratio)->capture_default_str();
  c->add_option("--chain-chunk", a.opts.guidance.chain_chunk)->capture_default_str();
  c->add_flag("--no-guide-lags", a.no_guide_lags, "leave lag channels unobserved");
  c->add_option("--seed", a.opts.seed)->capture_default_str();
  c->callback([c, scale, &a] {
    a.opts.guidance.variant = parse_guidance_variant(a.variant);
    if (!scale->count()) {
      a.scale = a.opts.guidance.variant == GuidanceVariant::MeanSquare ? GuidanceConfig::kDefaultMeanSquareScale : 4.0;
    }
    a.opts.guidance.scale = a.scale;
    a.opts.missing = parse_missing_scenario(a.missing);
    a.opts.guide_lags = !a.no_guide_lags;
    const DiffusionModel m = load_checkpoint(a.model);
    Provenance cfg = provenance(*c);
    cfg["resolved.scale"] = json(a.scale).dump();
    write_records(a.out, cfg, forecast_dataset(m, load_jsonl(a.data), a.opts));
  });
}

// --- refine ---------------------------------------------------------------

struct RefineArgs {
  std::string model, base, data, out, variant = "lmc", regularizer = "q";
  RefinementConfig cfg;
  std::uint64_t seed = 0;
};

void add_refine(CLI::App& app, RefineArgs& a) {
  auto* c = app.add_subcommand("refine", "Energy-based refinement of a base forecast");
  c->add_option("--model", a.model)->required()->check(CLI::ExistingFile);
  c->add_option("--base", a.base, "forecast file to refine")->required()->check(CLI::ExistingFile);
  c->add_option("--data", a.data)->required()->check(CLI::ExistingFile);
  c->add_option("-o,--out", a.out)->required();
  c->add_option("--variant", a.variant, "lmc or ml")->capture_default_str();
  c->add_option("--regularizer", a.regularizer, "ms or q")->capture_default_str();
  c->add_option("--iters", a.cfg.iterations)->capture_default_str();
  c->add_option("--eta", a.cfg.eta)->capture_default_str();
  c->add_option("--gamma", a.cfg.gamma)->capture_default_str();
  c->add_option("--lambda", a.cfg.lambda)->capture_default_str();
  c->add_option("--tau", a.cfg.tau, "0 = representative step stored in the checkpoint")->capture_default_str();
  c->add_option("--path-chunk", a.cfg.path_chunk)->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->callback([c, &a] {
    a.cfg.variant = parse_refine_variant(a.variant);
    a.cfg.regularizer = parse_regularizer(a.regularizer);
    const DiffusionModel m = load_checkpoint(a.model);
    Provenance cfg = provenance(*c);
    cfg["resolved.tau"] = std::to_string(a.cfg.resolve_tau(m));
    cfg["resolved.gamma"] = json(a.cfg.effective_gamma()).dump();
    write_records(a.out, cfg, refine_forecasts(m, load_jsonl(a.data), read_records(a.base), a.cfg, a.seed));
  });
}

// --- synthesize -----------------------------------------------------------

struct SynthesizeArgs {
  std::string model, out;
  int samples = 10000;
  int chain_chunk = GuidanceConfig{}.chain_chunk;
  std::uint64_t seed = 0;
};

void add_synthesize(CLI::App& app, SynthesizeArgs& a) {
  auto* c = app.add_subcommand("synthesize", "Unconditional samples in original units");
  c->add_option("--model", a.model)->required()->check(CLI::ExistingFile);
  c->add_option("-o,--out", a.out)->required();
  c->add_option("--samples", a.samples)->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->callback([c, &a] {
    const DiffusionModel m = load_checkpoint(a.model);
    SamplesFile f = synthesize(m, a.samples, a.seed);
    f.config = provenance(*c);
    f.config["resolved.context_length"] = std::to_string(m.meta.context_length);
    f.config["resolved.prediction_length"] = std::to_string(m.meta.prediction_length);
    write_samples_file(f, a.out);
  });
}

// --- baseline -------------------------------------------------------------

struct BaselineArgs {
  std::string data, out, method = "seasonal-naive";
  int context = 0, prediction = 0, season = 24, samples = 100;
  double alpha = 1.0;
};

void add_baseline(CLI::App& app, BaselineArgs& a) {
  auto* c = app.add_subcommand("baseline", "Seasonal Naive or Linear (ridge) point forecasts");
  c->add_option("--data", a.data)->required()->check(CLI::ExistingFile);
  c->add_option("-o,--out", a.out)->required();
  c->add_option("--method", a.method, "seasonal-naive or linear")->capture_default_str();
  c->add_option("--context-length", a.context, "0 = frequency default")->capture_default_str();
  c->add_option("--prediction-length", a.prediction, "0 = frequency default")->capture_default_str();
  c->add_option("--season", a.season)->capture_default_str();
  c->add_option("--alpha", a.alpha, "ridge penalty")->capture_default_str();
  c->add_option("--samples", a.samples, "copies of the point forecast")->capture_default_str();
  c->callback([c, &a] {
    const Dataset data = load_jsonl(a.data);
    if (data.series.empty()) throw ParameterError("--data: dataset is empty");
    const auto [ctx, pred] = resolve_lengths(a.context, a.prediction, data.series.front().freq);
    std::vector<ForecastRecord> records;
    if (a.method == "seasonal-naive") {
      records = seasonal_naive_forecasts(data, ctx, pred, a.season, a.samples);
    } else if (a.method == "linear") {
      records = linear_forecasts(data, ctx, pred, a.alpha, a.samples);
    } else {
      throw ParameterError("--method: expected seasonal-naive or linear, got '" + a.method + "'");
    }
    Provenance cfg = provenance(*c);
    cfg["resolved.context_length"] = std::to_string(ctx);
    cfg["resolved.prediction_length"] = std::to_string(pred);
    write_records(a.out, cfg, std::move(records));
  });
}

// --- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string input, data, out, metric = "crps";
  int context = 0, prediction = 0;
  double alpha = 1.0;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* c = app.add_subcommand("evaluate", "Score a forecast file (crps) or a samples file (lps)");
  c->add_option("--input", a.input)->required()->check(CLI::ExistingFile);
  c->add_option("--data", a.data)->required()->check(CLI::ExistingFile);
  c->add_option("-o,--out", a.out, "report path; the aggregate is also printed");
  c->add_option("--metric", a.metric, "crps or lps")->capture_default_str();
  c->add_option("--context-length", a.context, "lps only; 0 = from the samples file")->capture_default_str();
  c->add_option("--prediction-length", a.prediction, "lps only; 0 = from the samples file")->capture_default_str();
  c->add_option("--alpha", a.alpha, "lps ridge penalty")->capture_default_str();
  c->callback([c, &a] {
    const Dataset data = load_jsonl(a.data);
    EvaluationReport rep;
    if (a.metric == "crps") {
      rep = evaluate_crps(read_records(a.input), data);
    } else if (a.metric == "lps") {
      const SamplesFile f = read_samples_file(a.input);
      auto from_file = [&](int given, const char* key) {
        if (given > 0) return given;
        const auto it = f.config.find(key);
        if (it == f.config.end()) throw ParameterError(std::string("lps needs --") + "context-length/--prediction-length");
        return std::stoi(it->second);
      };
      const int ctx = from_file(a.context, "resolved.context_length");
      const int pred = from_file(a.prediction, "resolved.prediction_length");
      rep = evaluate_lps(f.windows, data, ctx, pred, a.alpha);
    } else {
      throw ParameterError("--metric: expected crps or lps, got '" + a.metric + "'");
    }
    rep.config = provenance(*c);
    std::cout << rep.metric << ' ' << json(rep.aggregate).dump() << '\n';
    if (!a.out.empty()) write_report(rep, a.out);
  });
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  configure_threads_from_env();

  CLI::App app{"TSDiff: unconditional diffusion for time series, with self-guidance and refinement"};
  app.set_config("--config", "", "INI file; [section] names match subcommands");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  SynthArgs synth;
  TrainArgs train_args;
  ForecastArgs forecast;
  RefineArgs refine_args;
  SynthesizeArgs synthesize_args;
  BaselineArgs baseline;
  EvaluateArgs evaluate;
  add_synth(app, synth);
  add_train(app, train_args);
  add_forecast(app, forecast);
  add_refine(app, refine_args);
  add_synthesize(app, synthesize_args);
  add_baseline(app, baseline);
  add_evaluate(app, evaluate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "tsdiff: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "tsdiff: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "tsdiff: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

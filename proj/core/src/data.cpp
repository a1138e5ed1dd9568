#include "tsdiff/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tsdiff/errors.hpp"

namespace tsdiff {

using json = nlohmann::json;

ObservationMask ObservationMask::empty(Eigen::Index length, Eigen::Index channels) {
  ObservationMask m;
  m.observed.setConstant(length, channels, false);
  m.values = Window::Zero(length, channels);
  return m;
}

ObservationMask observe(ObservationMask mask, const Window& window) {
  if (window.rows() != mask.length() || window.cols() != mask.channels()) {
    throw ShapeError("observe: window shape does not match mask");
  }
  mask.values = mask.observed.select(window, Window::Zero(window.rows(), window.cols()));
  return mask;
}

std::pair<int, int> default_lengths(const std::string& freq) {
  if (freq == "H") return {336, 24};
  if (freq == "D") return {360, 30};
  throw ParameterError("unsupported frequency '" + freq + "' (expected H or D)");
}

std::vector<int> default_lags(const std::string& freq, int max_history) {
  std::vector<int> all;
  if (freq == "H") {
    all = {24, 48, 168};
  } else if (freq == "D") {
    all = {7, 14};
  } else {
    throw ParameterError("unsupported frequency '" + freq + "'");
  }
  std::vector<int> out;
  for (int l : all) {
    if (l < max_history) out.push_back(l);
  }
  return out;
}

Dataset load_jsonl(std::istream& in) {
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + "invalid JSON (" + e.what() + ")");
    }
    if (!rec.is_object()) throw ParseError(where + "record is not an object");
    TimeSeries ts;
    if (!rec.contains("start") || !rec["start"].is_string()) throw ParseError(where + "missing string field 'start'");
    if (!rec.contains("target") || !rec["target"].is_array()) throw ParseError(where + "missing array field 'target'");
    ts.start = rec["start"].get<std::string>();
    ts.freq = rec.value("freq", std::string("H"));
    if (ts.freq != "H" && ts.freq != "D") throw ParseError(where + "freq must be \"H\" or \"D\"");
    if (rec.contains("item_id")) {
      ts.item_id = rec["item_id"].is_string() ? rec["item_id"].get<std::string>() : rec["item_id"].dump();
    } else {
      ts.item_id = std::to_string(data.series.size());
    }
    const auto& target = rec["target"];
    ts.values.reserve(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
      const auto& v = target[i];
      if (v.is_null() || (v.is_string() && (v == "NaN" || v == "nan"))) {
        throw ParseError(where + "target[" + std::to_string(i) + "] is NaN");
      }
      if (!v.is_number()) throw ParseError(where + "target[" + std::to_string(i) + "] is not numeric");
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw ParseError(where + "target[" + std::to_string(i) + "] is not finite");
      ts.values.push_back(x);
    }
    data.series.push_back(std::move(ts));
  }
  return data;
}

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  return load_jsonl(in);
}

void write_jsonl(const Dataset& data, std::ostream& out) {
  for (const auto& s : data.series) {
    json rec;
    rec["item_id"] = s.item_id;
    rec["start"] = s.start;
    rec["freq"] = s.freq;
    rec["target"] = s.values;
    out << rec.dump() << '\n';
  }
}

void write_jsonl(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_jsonl(data, out);
}

namespace {

ScaledWindow finish_scale(std::span<const double> window, double sum_abs, std::size_t count) {
  ScaledWindow w;
  const double mean = count ? sum_abs / static_cast<double>(count) : 0.0;
  w.scale = mean > 0.0 ? mean : 1.0;
  w.values = Eigen::Map<const Eigen::VectorXd>(window.data(), static_cast<Eigen::Index>(window.size())) / w.scale;
  return w;
}

}  // namespace

ScaledWindow mean_scale(std::span<const double> window, int context_length) {
  if (window.empty()) throw ParameterError("mean_scale: empty window");
  const std::size_t n =
      context_length > 0 ? std::min<std::size_t>(window.size(), static_cast<std::size_t>(context_length)) : window.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::abs(window[i]);
  return finish_scale(window, sum, n);
}

ScaledWindow mean_scale_observed(std::span<const double> window, const std::vector<bool>& observed) {
  if (window.empty()) throw ParameterError("mean_scale: empty window");
  if (observed.size() != window.size()) throw ShapeError("mean_scale: mask length mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    if (observed[i]) {
      sum += std::abs(window[i]);
      ++n;
    }
  }
  return finish_scale(window, sum, n);
}

ScaledWindow slice_random_window(const TimeSeries& series, int length, int context_length, std::mt19937_64& rng) {
  if (length <= 0) throw ParameterError("window length must be positive");
  if (series.values.size() < static_cast<std::size_t>(length)) {
    throw ParameterError("series '" + series.item_id + "' shorter than window length " + std::to_string(length));
  }
  std::uniform_int_distribution<std::size_t> pick(0, series.values.size() - static_cast<std::size_t>(length));
  const std::size_t offset = pick(rng);
  ScaledWindow w = mean_scale(std::span(series.values).subspan(offset, length), context_length);
  w.offset = static_cast<std::ptrdiff_t>(offset);
  return w;
}

Window build_lag_matrix(std::span<const double> values, std::ptrdiff_t offset, int length, std::span<const int> lags) {
  if (offset < 0 || offset + length > static_cast<std::ptrdiff_t>(values.size())) {
    throw ParameterError("build_lag_matrix: window exceeds series bounds");
  }
  Window m(length, 1 + static_cast<Eigen::Index>(lags.size()));
  for (std::size_t j = 0; j <= lags.size(); ++j) {
    const int lag = j == 0 ? 0 : lags[j - 1];
    if (lag < 0) throw ParameterError("build_lag_matrix: negative lag");
    if (offset < lag) {
      throw ParameterError("build_lag_matrix: insufficient history for lag " + std::to_string(lag));
    }
    for (int i = 0; i < length; ++i) m(i, static_cast<Eigen::Index>(j)) = values[offset + i - lag];
  }
  return m;
}

WindowSampler::WindowSampler(const Dataset& data, int length, int context_length, std::vector<int> lags)
    : data_(&data), length_(length), context_length_(context_length), lags_(std::move(lags)) {
  if (length <= 0) throw ParameterError("window length must be positive");
  for (int l : lags_) max_lag_ = std::max(max_lag_, l);
  for (std::size_t i = 0; i < data.series.size(); ++i) {
    if (data.series[i].values.size() >= static_cast<std::size_t>(length_ + max_lag_)) {
      eligible_.push_back(i);
    } else {
      std::clog << "warning: series '" << data.series[i].item_id << "' (length " << data.series[i].values.size()
                << ") is too short for windows of " << length_ + max_lag_ << " and is excluded\n";
    }
  }
  if (eligible_.empty()) throw ParameterError("no series long enough for the requested window length");
}

TrainingWindow WindowSampler::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> pick_series(0, eligible_.size() - 1);
  const std::size_t si = eligible_[pick_series(rng)];
  const auto& values = data_->series[si].values;
  std::uniform_int_distribution<std::size_t> pick_offset(static_cast<std::size_t>(max_lag_),
                                                         values.size() - static_cast<std::size_t>(length_));
  const auto offset = static_cast<std::ptrdiff_t>(pick_offset(rng));
  TrainingWindow w;
  w.series = si;
  w.offset = offset;
  w.scale = mean_scale(std::span(values).subspan(offset, length_), context_length_).scale;
  w.x = build_lag_matrix(values, offset, length_, lags_) / w.scale;
  return w;
}

MissingScenario parse_missing_scenario(const std::string& s) {
  if (s == "none" || s.empty()) return MissingScenario::None;
  if (s == "rm") return MissingScenario::RandomMissing;
  if (s == "bm-b") return MissingScenario::BlackoutBeginning;
  if (s == "bm-e") return MissingScenario::BlackoutEnd;
  throw ParameterError("unknown missing-value scenario '" + s + "' (expected none, rm, bm-b, bm-e)");
}

std::string to_string(MissingScenario s) {
  switch (s) {
    case MissingScenario::None: return "none";
    case MissingScenario::RandomMissing: return "rm";
    case MissingScenario::BlackoutBeginning: return "bm-b";
    case MissingScenario::BlackoutEnd: return "bm-e";
  }
  return "none";
}

ObservationMask make_missing_mask(MissingScenario scenario, double ratio, int context_len, int horizon,
                                  std::mt19937_64& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ParameterError("missing ratio must lie in [0, 1]");
  if (context_len < 0 || horizon < 0) throw ParameterError("negative context or horizon");
  ObservationMask m = ObservationMask::empty(context_len + horizon, 1);
  m.observed.col(0).head(context_len).setConstant(true);
  const int hidden = scenario == MissingScenario::None ? 0 : static_cast<int>(std::floor(ratio * context_len));
  switch (scenario) {
    case MissingScenario::None: break;
    case MissingScenario::BlackoutBeginning: m.observed.col(0).head(hidden).setConstant(false); break;
    case MissingScenario::BlackoutEnd: m.observed.col(0).segment(context_len - hidden, hidden).setConstant(false); break;
    case MissingScenario::RandomMissing: {
      std::vector<int> idx(context_len);
      std::iota(idx.begin(), idx.end(), 0);
      // Partial Fisher-Yates with an explicit draw so the result does not
      // depend on the standard library's shuffle.
      for (int i = 0; i < hidden; ++i) {
        std::uniform_int_distribution<int> pick(i, context_len - 1);
        std::swap(idx[i], idx[pick(rng)]);
        m.observed(idx[i], 0) = false;
      }
      break;
    }
  }
  return m;
}

ObservationMask extend_mask_to_lags(const ObservationMask& mask, std::span<const int> lags, bool guide_lags) {
  const Eigen::Index len = mask.length();
  ObservationMask out = ObservationMask::empty(len, 1 + static_cast<Eigen::Index>(lags.size()));
  out.observed.col(0) = mask.observed.col(0);
  out.values.col(0) = mask.values.col(0);
  if (!guide_lags) return out;
  for (std::size_t j = 0; j < lags.size(); ++j) {
    for (Eigen::Index i = 0; i < len; ++i) {
      const Eigen::Index src = i - lags[j];
      out.observed(i, static_cast<Eigen::Index>(j) + 1) = src < 0 || mask.observed(src, 0);
    }
  }
  return out;
}

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "sine-mixture") return SynthKind::SineMixture;
  if (s == "ar1") return SynthKind::AR1;
  if (s == "seasonal-noise") return SynthKind::SeasonalNoise;
  throw ParameterError("unknown synthetic kind '" + s + "' (expected sine-mixture, ar1, seasonal-noise)");
}

Dataset synth_generate(SynthKind kind, const SynthParams& params, int n_series, int length, std::uint64_t seed) {
  if (n_series < 0 || length < 0) throw ParameterError("synth_generate: negative size");
  if (params.noise_std < 0.0) throw ParameterError("synth_generate: negative noise");
  Dataset data;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (int s = 0; s < n_series; ++s) {
    TimeSeries ts;
    ts.item_id = std::to_string(s);
    ts.start = params.start;
    ts.freq = params.freq;
    ts.values.assign(length, params.level);
    switch (kind) {
      case SynthKind::SineMixture: {
        for (double period : params.periods) {
          if (!(period > 0.0)) throw ParameterError("sine-mixture periods must be positive");
          const double amp = params.amplitude_min + (params.amplitude_max - params.amplitude_min) * unit(rng);
          const double phase = two_pi * unit(rng);
          for (int t = 0; t < length; ++t) ts.values[t] += amp * std::sin(two_pi * t / period + phase);
        }
        for (auto& v : ts.values) v += params.noise_std * normal(rng);
        break;
      }
      case SynthKind::AR1: {
        double prev = 0.0;
        for (auto& v : ts.values) {
          prev = params.ar_coefficient * prev + params.noise_std * normal(rng);
          v += prev;
        }
        break;
      }
      case SynthKind::SeasonalNoise: {
        if (params.season <= 0) throw ParameterError("seasonal-noise season must be positive");
        std::vector<double> pattern(params.season);
        for (auto& p : pattern) p = params.amplitude_min + (params.amplitude_max - params.amplitude_min) * unit(rng);
        for (int t = 0; t < length; ++t) ts.values[t] += pattern[t % params.season] + params.noise_std * normal(rng);
        break;
      }
    }
    data.series.push_back(std::move(ts));
  }
  return data;
}

Dataset drop_last(const Dataset& data, int n) {
  Dataset out = data;
  for (auto& s : out.series) {
    const std::size_t keep = s.values.size() > static_cast<std::size_t>(n) ? s.values.size() - n : 0;
    s.values.resize(keep);
  }
  return out;
}

std::vector<Eigen::VectorXd> last_windows(const Dataset& data, int length) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(data.series.size());
  for (const auto& s : data.series) {
    if (s.values.size() < static_cast<std::size_t>(length)) {
      throw ParameterError("series '" + s.item_id + "' shorter than evaluation window " + std::to_string(length));
    }
    out.push_back(Eigen::Map<const Eigen::VectorXd>(s.values.data() + s.values.size() - length, length));
  }
  return out;
}

}  // namespace tsdiff

#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tsdiff/mask.hpp"
#include "tsdiff/schedule.hpp"

namespace tsdiff {

struct TimeSeries {
  std::string item_id;
  std::string start;  ///< ISO-8601 timestamp, kept verbatim
  std::string freq;   ///< "H" or "D"
  std::vector<double> values;
};

struct Dataset {
  std::vector<TimeSeries> series;
  int context_length = 0;
  int prediction_length = 0;

  int window_length() const { return context_length + prediction_length; }
};

/// Default context/prediction lengths per frequency tag (hourly 336/24,
/// daily 360/30).
std::pair<int, int> default_lengths(const std::string& freq);

/// Default lag set for a frequency tag, truncated to lags < `max_history`.
std::vector<int> default_lags(const std::string& freq, int max_history);

/// Reads JSON-lines records `{"start": ..., "freq": ..., "target": [...]}`.
/// Blank lines are skipped; any malformed record raises ParseError naming the
/// 1-based line number.
Dataset load_jsonl(std::istream& in);
Dataset load_jsonl(const std::string& path);
void write_jsonl(const Dataset& data, std::ostream& out);
void write_jsonl(const Dataset& data, const std::string& path);

/// A normalized slice of a series.
struct ScaledWindow {
  Eigen::VectorXd values;  ///< raw / scale
  double scale = 1.0;
  std::size_t series = 0;
  std::ptrdiff_t offset = 0;

  Eigen::VectorXd inverse() const { return values * scale; }
};

/// Divides by the mean absolute value of the first `context_length` entries
/// (all entries when context_length <= 0). A zero mean falls back to scale 1.
ScaledWindow mean_scale(std::span<const double> window, int context_length = 0);
/// Same, with the scale taken over observed entries only.
ScaledWindow mean_scale_observed(std::span<const double> window, const std::vector<bool>& observed);

/// Uniformly random length-L slice of one series, normalized over its first
/// `context_length` entries. Throws ParameterError when the series is shorter
/// than L.
ScaledWindow slice_random_window(const TimeSeries& series, int length, int context_length, std::mt19937_64& rng);

/// Raw L x C matrix: channel 0 is values[offset, offset+L), channel j is the
/// same span shifted back by lags[j-1].
Window build_lag_matrix(std::span<const double> values, std::ptrdiff_t offset, int length,
                        std::span<const int> lags);

/// Normalized training example with lag channels.
struct TrainingWindow {
  Window x;  ///< L x C, divided by scale
  double scale = 1.0;
  std::size_t series = 0;
  std::ptrdiff_t offset = 0;
};

/// Draws training windows uniformly over series, then uniformly over the
/// offsets that leave room for the largest lag. Series that are too short
/// are excluded with a warning on std::clog.
class WindowSampler {
 public:
  WindowSampler(const Dataset& data, int length, int context_length, std::vector<int> lags);

  TrainingWindow sample(std::mt19937_64& rng) const;
  std::size_t eligible_series() const { return eligible_.size(); }

 private:
  const Dataset* data_;
  int length_;
  int context_length_;
  std::vector<int> lags_;
  int max_lag_ = 0;
  std::vector<std::size_t> eligible_;
};

enum class MissingScenario { None, RandomMissing, BlackoutBeginning, BlackoutEnd };

MissingScenario parse_missing_scenario(const std::string& s);
std::string to_string(MissingScenario s);

/// Single-channel mask over context + horizon. floor(ratio * context_len)
/// context entries are hidden according to the scenario; horizon entries are
/// always targets.
ObservationMask make_missing_mask(MissingScenario scenario, double ratio, int context_len, int horizon,
                                  std::mt19937_64& rng);

/// Widens a channel-0 mask to 1 + lags.size() channels. A lag entry is
/// observed when its source timestep is observed (or lies before the window).
/// With `guide_lags` false, lag channels are left unobserved.
ObservationMask extend_mask_to_lags(const ObservationMask& mask, std::span<const int> lags, bool guide_lags);

enum class SynthKind { SineMixture, AR1, SeasonalNoise };

SynthKind parse_synth_kind(const std::string& s);

struct SynthParams {
  std::vector<double> periods{24.0, 12.0};  ///< sine-mixture component periods
  double amplitude_min = 0.5;
  double amplitude_max = 1.5;
  double level = 0.0;        ///< constant offset added to every series
  double noise_std = 0.1;
  double ar_coefficient = 0.0;
  int season = 24;           ///< seasonal-noise period
  std::string freq = "H";
  std::string start = "2020-01-01 00:00:00";
};

/// Deterministic synthetic corpus.
///  - sine-mixture: sum over periods of a_k sin(2 pi t / P_k + phi_k) + noise,
///    with a_k ~ U(amplitude_min, amplitude_max), phi_k ~ U(0, 2 pi) per series;
///  - ar1: y_t = coef * y_{t-1} + noise;
///  - seasonal-noise: a per-series random pattern of length `season` repeated,
///    plus noise.
Dataset synth_generate(SynthKind kind, const SynthParams& params, int n_series, int length, std::uint64_t seed);

/// Copy of `data` with the last `n` values removed from each series; used to
/// keep evaluation windows out of training.
Dataset drop_last(const Dataset& data, int n);

/// The final `length` values of every series (raw).
std::vector<Eigen::VectorXd> last_windows(const Dataset& data, int length);

}  // namespace tsdiff

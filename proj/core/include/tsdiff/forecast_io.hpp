#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tsdiff/forecast.hpp"

namespace tsdiff {

/// Resolved settings echoed into every output file.
using Provenance = std::map<std::string, std::string>;

inline constexpr int kFileFormatVersion = 1;

/// One series in a forecast file.
struct ForecastRecord {
  ForecastEnsemble ensemble;
  int window_length = 0;
  /// Window-relative indices that were observed (conditioning inputs).
  std::vector<int> observed;
};

/// JSON-lines file. Line 1 is the header
/// `{"format":"tsdiff-forecast","version":1,"config":{...}}`; each further
/// line is one record with item_id, window_start, window_length, observed,
/// indices, samples (N rows) and the nine-level quantile summary.
struct ForecastFile {
  Provenance config;
  std::vector<ForecastRecord> records;
};

void write_forecast_file(const ForecastFile& f, std::ostream& out);
void write_forecast_file(const ForecastFile& f, const std::string& path);
ForecastFile read_forecast_file(std::istream& in);
ForecastFile read_forecast_file(const std::string& path);

/// Unconditional samples: header `{"format":"tsdiff-samples",...}`, then one
/// `{"values":[...],"scale":s}` line per window (values in original units).
struct SamplesFile {
  Provenance config;
  std::vector<Eigen::VectorXd> windows;
  std::vector<double> scales;
};

void write_samples_file(const SamplesFile& f, std::ostream& out);
void write_samples_file(const SamplesFile& f, const std::string& path);
SamplesFile read_samples_file(std::istream& in);
SamplesFile read_samples_file(const std::string& path);

/// Evaluation report: header `{"format":"tsdiff-report",...}` and one result
/// line with metric, aggregate score, and per-series scores.
struct EvaluationReport {
  Provenance config;
  std::string metric;
  double aggregate = 0.0;
  std::vector<std::pair<std::string, double>> per_series;
};

void write_report(const EvaluationReport& r, std::ostream& out);
void write_report(const EvaluationReport& r, const std::string& path);
EvaluationReport read_report(std::istream& in);

}  // namespace tsdiff

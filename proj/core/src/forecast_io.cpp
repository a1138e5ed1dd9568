#include "tsdiff/forecast_io.hpp"

#include <fstream>

#include "json.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/metrics.hpp"

namespace tsdiff {
namespace {

using json = nlohmann::json;

json header(const std::string& format, const Provenance& config) {
  json h;
  h["format"] = format;
  h["version"] = kFileFormatVersion;
  h["config"] = json(config);
  return h;
}

Provenance read_header(std::istream& in, const std::string& format) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(format + ": empty file");
  json h;
  try {
    h = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(format + ": line 1 is not a JSON header");
  }
  if (!h.is_object() || h.value("format", std::string()) != format) {
    throw ParseError("line 1: expected format tag '" + format + "'");
  }
  if (h.value("version", 0) != kFileFormatVersion) throw ParseError(format + ": unsupported version");
  Provenance p;
  if (h.contains("config")) {
    for (const auto& [k, v] : h["config"].items()) p[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return p;
}

template <typename Fn>
void for_each_record(std::istream& in, const std::string& format, Fn&& fn) {
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(format + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return in;
}

}  // namespace

void write_forecast_file(const ForecastFile& f, std::ostream& out) {
  out << header("tsdiff-forecast", f.config).dump() << '\n';
  const auto& levels = standard_quantile_levels();
  for (const auto& r : f.records) {
    const auto& e = r.ensemble;
    json rec;
    rec["item_id"] = e.item_id;
    rec["window_start"] = e.window_start;
    rec["window_length"] = r.window_length;
    rec["observed"] = r.observed;
    rec["indices"] = e.indices;
    json samples = json::array();
    for (Eigen::Index i = 0; i < e.samples.rows(); ++i) samples.push_back(to_vector(e.samples.row(i).transpose()));
    rec["samples"] = std::move(samples);
    json q;
    q["levels"] = levels;
    json qv = json::array();
    if (e.num_samples() > 0) {
      const Eigen::MatrixXd qs = e.quantiles(levels);
      for (Eigen::Index k = 0; k < qs.rows(); ++k) qv.push_back(to_vector(qs.row(k).transpose()));
    }
    q["values"] = std::move(qv);
    rec["quantiles"] = std::move(q);
    out << rec.dump() << '\n';
  }
}

void write_forecast_file(const ForecastFile& f, const std::string& path) {
  auto out = open_out(path);
  write_forecast_file(f, out);
}

ForecastFile read_forecast_file(std::istream& in) {
  ForecastFile f;
  f.config = read_header(in, "tsdiff-forecast");
  for_each_record(in, "tsdiff-forecast", [&](const json& rec) {
    ForecastRecord r;
    r.ensemble.item_id = rec.at("item_id").get<std::string>();
    r.ensemble.window_start = rec.at("window_start").get<long long>();
    r.window_length = rec.at("window_length").get<int>();
    r.observed = rec.at("observed").get<std::vector<int>>();
    r.ensemble.indices = rec.at("indices").get<std::vector<int>>();
    const auto rows = rec.at("samples").get<std::vector<std::vector<double>>>();
    const auto k = static_cast<Eigen::Index>(r.ensemble.indices.size());
    r.ensemble.samples.resize(static_cast<Eigen::Index>(rows.size()), k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != k) {
        throw ParseError("tsdiff-forecast: sample path length does not match indices for '" + r.ensemble.item_id + "'");
      }
      for (Eigen::Index j = 0; j < k; ++j) r.ensemble.samples(static_cast<Eigen::Index>(i), j) = rows[i][j];
    }
    f.records.push_back(std::move(r));
  });
  return f;
}

ForecastFile read_forecast_file(const std::string& path) {
  auto in = open_in(path);
  return read_forecast_file(in);
}

void write_samples_file(const SamplesFile& f, std::ostream& out) {
  if (f.scales.size() != f.windows.size()) throw ShapeError("samples file: one scale per window required");
  out << header("tsdiff-samples", f.config).dump() << '\n';
  for (std::size_t i = 0; i < f.windows.size(); ++i) {
    json rec;
    rec["values"] = to_vector(f.windows[i]);
    rec["scale"] = f.scales[i];
    out << rec.dump() << '\n';
  }
}

void write_samples_file(const SamplesFile& f, const std::string& path) {
  auto out = open_out(path);
  write_samples_file(f, out);
}

SamplesFile read_samples_file(std::istream& in) {
  SamplesFile f;
  f.config = read_header(in, "tsdiff-samples");
  for_each_record(in, "tsdiff-samples", [&](const json& rec) {
    const auto v = rec.at("values").get<std::vector<double>>();
    f.windows.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    f.scales.push_back(rec.value("scale", 1.0));
  });
  return f;
}

SamplesFile read_samples_file(const std::string& path) {
  auto in = open_in(path);
  return read_samples_file(in);
}

void write_report(const EvaluationReport& r, std::ostream& out) {
  out << header("tsdiff-report", r.config).dump() << '\n';
  json rec;
  rec["metric"] = r.metric;
  rec["aggregate"] = r.aggregate;
  json per = json::array();
  for (const auto& [id, v] : r.per_series) per.push_back({{"item_id", id}, {"score", v}});
  rec["per_series"] = std::move(per);
  out << rec.dump() << '\n';
}

void write_report(const EvaluationReport& r, const std::string& path) {
  auto out = open_out(path);
  write_report(r, out);
}

EvaluationReport read_report(std::istream& in) {
  EvaluationReport r;
  r.config = read_header(in, "tsdiff-report");
  for_each_record(in, "tsdiff-report", [&](const json& rec) {
    r.metric = rec.at("metric").get<std::string>();
    r.aggregate = rec.at("aggregate").get<double>();
    for (const auto& s : rec.at("per_series")) {
      r.per_series.emplace_back(s.at("item_id").get<std::string>(), s.at("score").get<double>());
    }
  });
  return r;
}

}  // namespace tsdiff

#include "tsdiff/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "tsdiff/errors.hpp"

namespace tsdiff {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("checkpoint: bad number for '" + key + "': " + s);
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("checkpoint: bad integer for '" + key + "': " + s);
  }
  return v;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ' ';
    if constexpr (std::is_floating_point_v<T>) {
      s += fmt_double(xs[i]);
    } else {
      s += std::to_string(xs[i]);
    }
  }
  return s.empty() ? "-" : s;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  if (s == "-") return out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void round_params_to_float(DenoiserParams& params) {
  for (double& v : params.values) v = static_cast<double>(static_cast<float>(v));
}

void save_checkpoint(const DiffusionModel& model, std::ostream& out) {
  const auto& c = model.config;
  const auto& m = model.meta;
  if (static_cast<Eigen::Index>(model.params.values.size()) != parameter_count(c)) {
    throw ShapeError("save_checkpoint: parameter vector does not match config");
  }
  out << "tsdiff-checkpoint " << kCheckpointVersion << '\n';
  out << "config.length " << c.length << '\n';
  out << "config.input_channels " << c.input_channels << '\n';
  out << "config.residual_layers " << c.residual_layers << '\n';
  out << "config.hidden " << c.hidden << '\n';
  out << "config.time_emb_dim " << c.time_emb_dim << '\n';
  out << "config.skip_input_to_output " << (c.skip_input_to_output ? 1 : 0) << '\n';
  out << "schedule.steps " << model.schedule.steps() << '\n';
  out << "schedule.beta_1 " << fmt_double(model.schedule.beta_first()) << '\n';
  out << "schedule.beta_T " << fmt_double(model.schedule.beta_last()) << '\n';
  out << "meta.context_length " << m.context_length << '\n';
  out << "meta.prediction_length " << m.prediction_length << '\n';
  out << "meta.freq " << m.freq << '\n';
  out << "meta.lags " << join(m.lags) << '\n';
  out << "train.learning_rate " << fmt_double(m.learning_rate) << '\n';
  out << "train.batch_size " << m.batch_size << '\n';
  out << "train.epochs " << m.epochs << '\n';
  out << "train.batches_per_epoch " << m.batches_per_epoch << '\n';
  out << "train.grad_clip " << fmt_double(m.grad_clip) << '\n';
  out << "train.seed " << m.seed << '\n';
  out << "train.final_loss " << fmt_double(m.final_loss) << '\n';
  out << "meta.representative_step " << m.representative_step << '\n';
  out << "meta.train_scales " << join(m.train_scales) << '\n';
  for (const auto& [k, v] : m.provenance) {
    if (k.empty() || k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ParameterError("save_checkpoint: provenance entries must be single-line and keys space-free");
    }
    out << "provenance." << k << ' ' << v << '\n';
  }
  out << "params.init_seed " << model.params.init_seed << '\n';
  out << "params.count " << model.params.values.size() << '\n';
  out << "end_header\n";
  for (double v : model.params.values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(f));
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

void save_checkpoint(const DiffusionModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  save_checkpoint(model, out);
}

DiffusionModel load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("checkpoint: empty input");
  {
    std::istringstream is(line);
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "tsdiff-checkpoint") throw ParseError("checkpoint: missing format tag");
    if (version != kCheckpointVersion) {
      throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    }
  }
  std::map<std::string, std::string> kv;
  bool closed = false;
  while (std::getline(in, line)) {
    if (line == "end_header") {
      closed = true;
      break;
    }
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError("checkpoint: malformed header line: " + line);
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  if (!closed) throw ParseError("checkpoint: header not terminated");
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw ParseError("checkpoint: missing header key '" + k + "'");
    return it->second;
  };
  auto get_int = [&](const std::string& k) { return static_cast<int>(parse_int(k, get(k))); };
  auto get_double = [&](const std::string& k) { return parse_double(k, get(k)); };

  DiffusionModel model;
  auto& c = model.config;
  c.length = get_int("config.length");
  c.input_channels = get_int("config.input_channels");
  c.residual_layers = get_int("config.residual_layers");
  c.hidden = get_int("config.hidden");
  c.time_emb_dim = get_int("config.time_emb_dim");
  c.skip_input_to_output = get_int("config.skip_input_to_output") != 0;
  c.validate();
  model.schedule =
      build_linear_schedule(get_int("schedule.steps"), get_double("schedule.beta_1"), get_double("schedule.beta_T"));

  auto& m = model.meta;
  m.context_length = get_int("meta.context_length");
  m.prediction_length = get_int("meta.prediction_length");
  m.freq = get("meta.freq");
  for (const auto& tok : split_ws(get("meta.lags"))) m.lags.push_back(static_cast<int>(parse_int("meta.lags", tok)));
  m.learning_rate = get_double("train.learning_rate");
  m.batch_size = get_int("train.batch_size");
  m.epochs = get_int("train.epochs");
  m.batches_per_epoch = get_int("train.batches_per_epoch");
  m.grad_clip = get_double("train.grad_clip");
  m.seed = static_cast<std::uint64_t>(parse_int("train.seed", get("train.seed")));
  m.final_loss = get_double("train.final_loss");
  m.representative_step = get_int("meta.representative_step");
  for (const auto& tok : split_ws(get("meta.train_scales"))) m.train_scales.push_back(parse_double("meta.train_scales", tok));

  for (const auto& [k, v] : kv) {
    if (k.starts_with("provenance.")) m.provenance[k.substr(11)] = v;
  }

  model.params.init_seed = static_cast<std::uint64_t>(parse_int("params.init_seed", get("params.init_seed")));
  const long long count = parse_int("params.count", get("params.count"));
  if (count != parameter_count(c)) throw ParseError("checkpoint: params.count does not match config");
  model.params.values.resize(static_cast<std::size_t>(count));
  for (auto& v : model.params.values) {
    std::uint32_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof(bits))) throw ParseError("checkpoint: truncated parameters");
    v = static_cast<double>(std::bit_cast<float>(to_le(bits)));
  }
  return model;
}

DiffusionModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace tsdiff

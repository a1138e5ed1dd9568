#include "tsdiff/denoiser.hpp"

#include <cmath>
#include <random>
#include <string>

#include "tsdiff/errors.hpp"

namespace tsdiff {
namespace {

constexpr int kKernel = 3;

using Eigen::Index;
using Eigen::MatrixXd;

ParamSlot take(Index& cursor, Index rows, Index cols = 1) {
  ParamSlot s{cursor, rows, cols};
  cursor += rows * cols;
  return s;
}

// out[:, b*L + i] = in[:, b*L + i + offset] when 0 <= i + offset < L, else 0.
void shift_windows(const Eigen::Ref<const MatrixXd>& in, Eigen::Ref<MatrixXd> out, Index offset, Index length) {
  out.setZero();
  const Index windows = in.cols() / length;
  const Index span = length - std::abs(offset);
  if (span <= 0) return;
  for (Index b = 0; b < windows; ++b) {
    const Index base = b * length;
    if (offset >= 0) {
      out.middleCols(base, span) = in.middleCols(base + offset, span);
    } else {
      out.middleCols(base - offset, span) = in.middleCols(base, span);
    }
  }
}

// Eigen's double tanh is scalar; this form vectorizes through exp.
template <typename Derived>
Eigen::ArrayXXd tanh_vec(const Eigen::ArrayBase<Derived>& a) {
  return 1.0 - 2.0 / ((2.0 * a).exp() + 1.0);
}

template <typename Derived>
MatrixXd sigmoid(const Eigen::MatrixBase<Derived>& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

MatrixXd silu(const MatrixXd& a) { return (a.array() * sigmoid(a).array()).matrix(); }

MatrixXd silu_grad(const MatrixXd& a) {
  const Eigen::ArrayXXd s = sigmoid(a).array();
  return (s * (1.0 + a.array() * (1.0 - s))).matrix();
}

Index dilation(int layer) { return Index{1} << layer; }

}  // namespace

void DenoiserConfig::validate() const {
  if (length <= 0 || input_channels <= 0 || residual_layers <= 0 || hidden <= 0 || time_emb_dim <= 0) {
    throw ParameterError("denoiser config: all sizes must be positive");
  }
  if (time_emb_dim % 2 != 0) throw ParameterError("denoiser config: time_emb_dim must be even");
  if (residual_layers > 30) throw ParameterError("denoiser config: too many residual layers");
}

ParamLayout ParamLayout::make(const DenoiserConfig& cfg) {
  cfg.validate();
  const Index h = cfg.hidden, c = cfg.input_channels, e = cfg.time_emb_dim;
  ParamLayout p;
  Index cur = 0;
  p.in_w = take(cur, h, c);
  p.in_b = take(cur, h);
  p.time_w1 = take(cur, h, e);
  p.time_b1 = take(cur, h);
  p.time_w2 = take(cur, h, h);
  p.time_b2 = take(cur, h);
  p.layers.resize(cfg.residual_layers);
  for (auto& l : p.layers) {
    l.step_w = take(cur, h, h);
    l.step_b = take(cur, h);
    for (auto& k : l.conv_w) k = take(cur, 2 * h, h);
    l.conv_b = take(cur, 2 * h);
    l.out_w = take(cur, 2 * h, h);
    l.out_b = take(cur, 2 * h);
  }
  p.head_w1 = take(cur, h, h);
  p.head_b1 = take(cur, h);
  p.head_w2 = take(cur, c, h);
  p.head_b2 = take(cur, c);
  p.total = cur;
  return p;
}

Index parameter_count(const DenoiserConfig& cfg) {
  cfg.validate();
  const Index h = cfg.hidden, c = cfg.input_channels, e = cfg.time_emb_dim;
  const Index input = h * c + h;
  const Index time = h * e + h + h * h + h;
  const Index layer = (h * h + h) + (kKernel * 2 * h * h + 2 * h) + (2 * h * h + 2 * h);
  const Index head = (h * h + h) + (c * h + c);
  return input + time + cfg.residual_layers * layer + head;
}

Eigen::VectorXd embed_timestep(int t, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ParameterError("timestep embedding dimension must be even and positive");
  if (t < 0) throw ParameterError("timestep must be non-negative");
  Eigen::VectorXd e(dim);
  for (int k = 0; k < dim / 2; ++k) {
    const double freq = std::pow(10000.0, -2.0 * k / static_cast<double>(dim));
    e[2 * k] = std::sin(t * freq);
    e[2 * k + 1] = std::cos(t * freq);
  }
  return e;
}

DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
  const ParamLayout layout = ParamLayout::make(cfg);
  DenoiserParams p;
  p.init_seed = seed;
  p.values.assign(layout.total, 0.0);
  std::mt19937_64 rng(seed);
  auto fill = [&](const ParamSlot& s, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (Index i = 0; i < s.size(); ++i) p.values[s.offset + i] = dist(rng);
  };
  const double h = cfg.hidden;
  fill(layout.in_w, cfg.input_channels);
  fill(layout.time_w1, cfg.time_emb_dim);
  fill(layout.time_w2, h);
  for (const auto& l : layout.layers) {
    fill(l.step_w, h);
    for (const auto& k : l.conv_w) fill(k, kKernel * h);
    fill(l.out_w, h);
  }
  fill(layout.head_w1, h);
  // head_w2 / head_b2 stay zero.
  return p;
}

Denoiser::Denoiser(const DenoiserConfig& cfg, std::span<const double> params)
    : cfg_(cfg), layout_(ParamLayout::make(cfg)) {
  if (static_cast<Index>(params.size()) != layout_.total) {
    throw ShapeError("denoiser: expected " + std::to_string(layout_.total) + " parameters, got " +
                     std::to_string(params.size()));
  }
  params_ = Eigen::Map<const Eigen::VectorXd>(params.data(), layout_.total);
}

Eigen::Map<const MatrixXd> Denoiser::mat(const ParamSlot& s) const {
  return {params_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<const Eigen::VectorXd> Denoiser::vec(const ParamSlot& s) const {
  return {params_.data() + s.offset, s.rows};
}

MatrixXd Denoiser::forward_batch(const MatrixXd& x, std::span<const int> steps, DenoiserTape* tape) const {
  const Index len = cfg_.length;
  const Index batch = static_cast<Index>(steps.size());
  if (x.rows() != cfg_.input_channels || x.cols() != batch * len) {
    throw ShapeError("denoiser: batched input must be " + std::to_string(cfg_.input_channels) + " x " +
                     std::to_string(batch * len));
  }
  if (!x.allFinite()) throw NumericError("denoiser: non-finite input");

  MatrixXd emb(cfg_.time_emb_dim, batch);
  for (Index b = 0; b < batch; ++b) emb.col(b) = embed_timestep(steps[b], cfg_.time_emb_dim);
  MatrixXd a1 = (mat(layout_.time_w1) * emb).colwise() + vec(layout_.time_b1);
  MatrixXd z1 = silu(a1);
  MatrixXd a2 = (mat(layout_.time_w2) * z1).colwise() + vec(layout_.time_b2);
  MatrixXd d = silu(a2);

  const Index hid = cfg_.hidden;
  MatrixXd h = (mat(layout_.in_w) * x).colwise() + vec(layout_.in_b);
  MatrixXd skip = MatrixXd::Zero(hid, x.cols());
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

  if (tape) {
    tape->ucat.clear();
    tape->sg.clear();
    tape->th.clear();
    tape->g.clear();
  }
  for (int l = 0; l < cfg_.residual_layers; ++l) {
    const auto& ls = layout_.layers[l];
    const MatrixXd s = (mat(ls.step_w) * d).colwise() + vec(ls.step_b);
    MatrixXd u = h;
    for (Index b = 0; b < batch; ++b) u.middleCols(b * len, len).colwise() += s.col(b);

    // The three taps become one GEMM over shifted copies of u.
    MatrixXd ucat(kKernel * hid, x.cols());
    MatrixXd wcat(2 * hid, kKernel * hid);
    for (int k = 0; k < kKernel; ++k) {
      shift_windows(u, ucat.middleRows(k * hid, hid), (k - 1) * dilation(l), len);
      wcat.middleCols(k * hid, hid) = mat(ls.conv_w[k]);
    }
    MatrixXd v = (wcat * ucat).colwise() + vec(ls.conv_b);
    Eigen::ArrayXXd sg = 1.0 / (1.0 + (-v.topRows(hid).array()).exp());
    Eigen::ArrayXXd th = tanh_vec(v.bottomRows(hid).array());
    MatrixXd g = (sg * th).matrix();
    MatrixXd o = (mat(ls.out_w) * g).colwise() + vec(ls.out_b);
    if (l + 1 < cfg_.residual_layers) h = (h + o.topRows(hid)) * inv_sqrt2;
    skip += o.bottomRows(hid);
    if (tape) {
      tape->ucat.push_back(std::move(ucat));
      tape->sg.push_back(std::move(sg));
      tape->th.push_back(std::move(th));
      tape->g.push_back(std::move(g));
    }
  }
  skip *= 1.0 / std::sqrt(static_cast<double>(cfg_.residual_layers));
  MatrixXd head_a = (mat(layout_.head_w1) * skip).colwise() + vec(layout_.head_b1);
  MatrixXd head_z = silu(head_a);
  MatrixXd out = (mat(layout_.head_w2) * head_z).colwise() + vec(layout_.head_b2);
  if (cfg_.skip_input_to_output) out += x;

  if (tape) {
    tape->x = x;
    tape->steps.assign(steps.begin(), steps.end());
    tape->emb = std::move(emb);
    tape->a1 = std::move(a1);
    tape->z1 = std::move(z1);
    tape->a2 = std::move(a2);
    tape->d = std::move(d);
    tape->skip = std::move(skip);
    tape->head_a = std::move(head_a);
    tape->head_z = std::move(head_z);
  }
  return out;
}

void Denoiser::backward(const DenoiserTape& tape, const MatrixXd& d_out, MatrixXd* d_input,
                        std::span<double> d_params) const {
  const Index len = cfg_.length;
  const Index hid = cfg_.hidden;
  const Index cols = tape.x.cols();
  const Index batch = static_cast<Index>(tape.steps.size());
  if (d_out.rows() != tape.x.rows() || d_out.cols() != cols) throw ShapeError("denoiser backward: cotangent shape");
  const bool want_params = !d_params.empty();
  if (want_params && static_cast<Index>(d_params.size()) != layout_.total) {
    throw ShapeError("denoiser backward: gradient buffer size");
  }
  auto grad = [&](const ParamSlot& s) { return Eigen::Map<MatrixXd>(d_params.data() + s.offset, s.rows, s.cols); };

  if (d_input) {
    d_input->setZero(tape.x.rows(), cols);
    if (cfg_.skip_input_to_output) *d_input += d_out;
  }
  if (want_params) {
    grad(layout_.head_w2).noalias() += d_out * tape.head_z.transpose();
    grad(layout_.head_b2) += d_out.rowwise().sum();
  }
  const MatrixXd da = ((mat(layout_.head_w2).transpose() * d_out).array() * silu_grad(tape.head_a).array()).matrix();
  if (want_params) {
    grad(layout_.head_w1).noalias() += da * tape.skip.transpose();
    grad(layout_.head_b1) += da.rowwise().sum();
  }
  const MatrixXd d_skip =
      (mat(layout_.head_w1).transpose() * da) * (1.0 / std::sqrt(static_cast<double>(cfg_.residual_layers)));

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  MatrixXd dh = MatrixXd::Zero(hid, cols);
  MatrixXd dd = MatrixXd::Zero(hid, batch);
  MatrixXd d_o(2 * hid, cols);
  for (int l = cfg_.residual_layers - 1; l >= 0; --l) {
    const auto& ls = layout_.layers[l];
    const Eigen::ArrayXXd& sg = tape.sg[l];
    const Eigen::ArrayXXd& th = tape.th[l];
    d_o.topRows(hid) = dh * inv_sqrt2;
    d_o.bottomRows(hid) = d_skip;
    MatrixXd dh_prev = dh * inv_sqrt2;

    if (want_params) {
      grad(ls.out_w).noalias() += d_o * tape.g[l].transpose();
      grad(ls.out_b) += d_o.rowwise().sum();
    }
    const MatrixXd dg = mat(ls.out_w).transpose() * d_o;
    MatrixXd dv(2 * hid, cols);
    dv.topRows(hid) = (dg.array() * th * sg * (1.0 - sg)).matrix();
    dv.bottomRows(hid) = (dg.array() * sg * (1.0 - th.square())).matrix();
    if (want_params) grad(ls.conv_b) += dv.rowwise().sum();

    MatrixXd wcat(2 * hid, kKernel * hid);
    for (int k = 0; k < kKernel; ++k) wcat.middleCols(k * hid, hid) = mat(ls.conv_w[k]);
    if (want_params) {
      const MatrixXd dw = dv * tape.ucat[l].transpose();
      for (int k = 0; k < kKernel; ++k) grad(ls.conv_w[k]) += dw.middleCols(k * hid, hid);
    }
    const MatrixXd ducat = wcat.transpose() * dv;
    MatrixXd du = MatrixXd::Zero(hid, cols);
    MatrixXd tmp(hid, cols);
    for (int k = 0; k < kKernel; ++k) {
      shift_windows(ducat.middleRows(k * hid, hid), tmp, -(k - 1) * dilation(l), len);
      du += tmp;
    }
    dh_prev += du;
    if (want_params) {
      MatrixXd ds(hid, batch);
      for (Index b = 0; b < batch; ++b) ds.col(b) = du.middleCols(b * len, len).rowwise().sum();
      grad(ls.step_w).noalias() += ds * tape.d.transpose();
      grad(ls.step_b) += ds.rowwise().sum();
      dd.noalias() += mat(ls.step_w).transpose() * ds;
    }
    dh = std::move(dh_prev);
  }

  if (d_input) d_input->noalias() += mat(layout_.in_w).transpose() * dh;
  if (want_params) {
    grad(layout_.in_w).noalias() += dh * tape.x.transpose();
    grad(layout_.in_b) += dh.rowwise().sum();
    const MatrixXd da2 = (dd.array() * silu_grad(tape.a2).array()).matrix();
    grad(layout_.time_w2).noalias() += da2 * tape.z1.transpose();
    grad(layout_.time_b2) += da2.rowwise().sum();
    const MatrixXd da1 =
        ((mat(layout_.time_w2).transpose() * da2).array() * silu_grad(tape.a1).array()).matrix();
    grad(layout_.time_w1).noalias() += da1 * tape.emb.transpose();
    grad(layout_.time_b1) += da1.rowwise().sum();
  }
}

Window Denoiser::forward(const Window& x_t, int t) const {
  const Window* one = &x_t;
  const int steps[1] = {t};
  return unpack_windows(forward_batch(pack_windows({one, 1}), steps), cfg_.length).front();
}

Window Denoiser::vjp_wrt_input(const Window& x_t, int t, const Window& cotangent) const {
  const int steps[1] = {t};
  DenoiserTape tape;
  forward_batch(pack_windows({&x_t, 1}), steps, &tape);
  MatrixXd dx;
  backward(tape, pack_windows({&cotangent, 1}), &dx, {});
  return unpack_windows(dx, cfg_.length).front();
}

std::vector<double> Denoiser::vjp_wrt_params(const Window& x_t, int t, const Window& cotangent) const {
  const int steps[1] = {t};
  DenoiserTape tape;
  forward_batch(pack_windows({&x_t, 1}), steps, &tape);
  std::vector<double> g(layout_.total, 0.0);
  backward(tape, pack_windows({&cotangent, 1}), nullptr, g);
  return g;
}

MatrixXd pack_windows(std::span<const Window> windows) {
  if (windows.empty()) return {};
  const Index len = windows.front().rows();
  const Index ch = windows.front().cols();
  MatrixXd packed(ch, len * static_cast<Index>(windows.size()));
  for (std::size_t b = 0; b < windows.size(); ++b) {
    if (windows[b].rows() != len || windows[b].cols() != ch) throw ShapeError("pack_windows: ragged batch");
    packed.middleCols(static_cast<Index>(b) * len, len) = windows[b].transpose();
  }
  return packed;
}

std::vector<Window> unpack_windows(const MatrixXd& packed, Index length) {
  if (length <= 0 || packed.cols() % length != 0) throw ShapeError("unpack_windows: bad length");
  std::vector<Window> out(packed.cols() / length);
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b] = packed.middleCols(static_cast<Index>(b) * length, length).transpose();
  }
  return out;
}

}  // namespace tsdiff

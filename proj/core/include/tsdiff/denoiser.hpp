#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "tsdiff/schedule.hpp"

namespace tsdiff {

/// Shape of the noise-prediction network.
///
/// The network is a stack of residual blocks. Each block adds a projection
/// of the diffusion-step embedding, mixes along time with a kernel-3 dilated
/// convolution (dilation 2^layer, zero padded per window), applies the gated
/// activation sigmoid(a) * tanh(b), and mixes channels with a 1x1 map that
/// feeds both the residual stream and a shared skip stream. The skip stream
/// goes through a two-layer 1x1 head whose last layer starts at zero.
struct DenoiserConfig {
  int length = 0;          ///< window length L
  int input_channels = 1;  ///< C = 1 + number of lags
  int residual_layers = 3;
  int hidden = 64;
  int time_emb_dim = 128;
  bool skip_input_to_output = false;

  /// Throws ParameterError for non-positive sizes or an odd embedding size.
  void validate() const;

  bool operator==(const DenoiserConfig&) const = default;
};

/// Location of one weight tensor inside the flat parameter vector.
struct ParamSlot {
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 1;
  Eigen::Index size() const { return rows * cols; }
};

struct ResidualLayerSlots {
  ParamSlot step_w, step_b;
  ParamSlot conv_w[3];
  ParamSlot conv_b;
  ParamSlot out_w, out_b;
};

/// Offsets of every tensor; a pure function of the config.
struct ParamLayout {
  ParamSlot in_w, in_b;
  ParamSlot time_w1, time_b1, time_w2, time_b2;
  std::vector<ResidualLayerSlots> layers;
  ParamSlot head_w1, head_b1, head_w2, head_b2;
  Eigen::Index total = 0;

  static ParamLayout make(const DenoiserConfig& cfg);
};

struct DenoiserParams {
  std::vector<double> values;
  std::uint64_t init_seed = 0;
};

/// Closed-form parameter count for `cfg`.
Eigen::Index parameter_count(const DenoiserConfig& cfg);

/// Sinusoidal embedding: entries 2k and 2k+1 are sin and cos of
/// t / 10000^(2k/dim).
Eigen::VectorXd embed_timestep(int t, int dim);

/// Deterministic initialisation. Weight matrices are drawn from
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero; the final output
/// layer is all zeros, so fresh parameters predict eps = 0 (plus x when the
/// input-to-output skip is enabled).
DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed);

/// Activations recorded by a batched forward pass for the reverse sweep.
struct DenoiserTape {
  Eigen::MatrixXd x;  // C x N
  std::vector<int> steps;
  Eigen::MatrixXd emb, a1, z1, a2, d;  // per-window columns
  std::vector<Eigen::MatrixXd> ucat, g;  // stacked conv taps, gate output
  std::vector<Eigen::ArrayXXd> sg, th;    // gate sigmoid and tanh halves
  Eigen::MatrixXd skip, head_a, head_z;
};

/// Read-only evaluator over a copy of a parameter vector. The copy is held
/// in Eigen-aligned storage so vectorized reductions do not depend on where
/// the caller's buffer happens to sit in memory. Batched calls take a
/// `C x (B*L)` matrix holding B windows side by side (window b occupies
/// columns [b*L, (b+1)*L)), one diffusion step per window.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, std::span<const double> params);

  const DenoiserConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }

  /// eps_theta(x_t, t) for a single L x C window.
  Window forward(const Window& x_t, int t) const;
  /// J^T * cotangent, J = d eps_theta / d x_t.
  Window vjp_wrt_input(const Window& x_t, int t, const Window& cotangent) const;
  /// (d eps_theta / d theta)^T * cotangent as a flat vector.
  std::vector<double> vjp_wrt_params(const Window& x_t, int t, const Window& cotangent) const;

  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, std::span<const int> steps,
                                DenoiserTape* tape = nullptr) const;

  /// Reverse sweep over a recorded tape. `d_input` (if non-null) receives
  /// J^T d_out; `d_params` (if non-empty) is accumulated into.
  void backward(const DenoiserTape& tape, const Eigen::MatrixXd& d_out, Eigen::MatrixXd* d_input,
                std::span<double> d_params) const;

 private:
  Eigen::Map<const Eigen::MatrixXd> mat(const ParamSlot& s) const;
  Eigen::Map<const Eigen::VectorXd> vec(const ParamSlot& s) const;

  DenoiserConfig cfg_;
  ParamLayout layout_;
  Eigen::VectorXd params_;
};

/// Packs windows (L x C each) into the batched C x (B*L) layout.
Eigen::MatrixXd pack_windows(std::span<const Window> windows);
/// Inverse of pack_windows for a batch of `count` windows of length `length`.
std::vector<Window> unpack_windows(const Eigen::MatrixXd& packed, Eigen::Index length);

}  // namespace tsdiff

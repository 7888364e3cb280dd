#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mcpst/params.hpp"
#include "mcpst/rng.hpp"

namespace mcpst::encoder {

struct EncoderConfig {
  std::size_t hidden = 16;       // per-scale LSTM width h
  std::size_t heads = 8;
  std::size_t layers = 2;
  std::size_t ffn_hidden = 64;
  double dropout = 0.1;
  std::size_t in_channels = 5;
  std::size_t phase_width = 38;  // width of the phase features conditioning attention

  std::size_t total() const { return 4 * hidden; }
  std::size_t season_width() const { return total() / 8 > 0 ? total() / 8 : 1; }
  std::size_t head_dim() const { return (total() + heads - 1) / heads; }
};

inline constexpr std::size_t kScales[4] = {1, 2, 4, 8};

/// Dropout is active only when `train` is set; masks are drawn from `rng`.
struct ForwardMode {
  bool train = false;
  Rng* rng = nullptr;
};

/// Softmax rows captured from every attention block, for checks and export.
struct AttentionTrace {
  std::vector<Tensor> probabilities;  // each B x N x heads x T x T
};

void register_params(ParameterStore& store, Rng& rng, const EncoderConfig& cfg);

struct LstmState {
  ad::Var h;
  ad::Var c;
};

/// One step with fused gate weight w[(h + C), 4h] (gate order f, i, c~, o)
/// acting on [h_prev, x_t].
LstmState lstm_cell(const ad::Var& x_t, const LstmState& prev, const ad::Var& w, const ad::Var& b,
                    std::size_t hidden);

/// Gate nonlinearities and state update from pre-activations gates[..., 4h].
LstmState lstm_gates(const ad::Var& gates, const ad::Var& c_prev, std::size_t hidden);

/// Runs `<prefix>.w/.b` over x[B, T, N, C]; returns B x T x N x h.
ad::Var run_lstm(ParamBinding& bind, const std::string& prefix, const ad::Var& x,
                 std::size_t hidden);

/// Keeps time steps 0, k, 2k, ...
ad::Var downsample(const ad::Var& seq, std::size_t k);

/// target x knots matrix mapping knot values at 0, stride, 2 stride, ... to
/// positions 0..target-1. Natural cubic spline for >= 4 knots, linear for 2-3,
/// constant for 1; linear extrapolation past the last knot.
Tensor spline_matrix(std::size_t target, std::size_t knots, std::size_t stride);

ad::Var upsample_spline(const ad::Var& seq, std::size_t target, std::size_t stride);

/// [H_s, H_m, H_l, H_v]: B x T x N x 4h.
ad::Var multiscale_encode(ParamBinding& bind, const ad::Var& x, const EncoderConfig& cfg);

/// Sinusoidal table P(t, 2i) = sin(t / 10000^(2i/width)), P(t, 2i+1) = cos(...).
Tensor positional_encoding(std::size_t steps, std::size_t width);

/// Multi-head attention over time per node, conditioned on f_phase[B, N, P].
ad::Var phase_attention(ParamBinding& bind, const std::string& prefix, const ad::Var& h_seq,
                        const ad::Var& f_phase, const EncoderConfig& cfg,
                        AttentionTrace* trace = nullptr);

ad::Var transformer_layer(ParamBinding& bind, const std::string& prefix, const ad::Var& h_seq,
                          const ad::Var& f_phase, const EncoderConfig& cfg,
                          AttentionTrace* trace = nullptr);

/// LN(w2 relu(w1 x + b1)): B x T x N x (4h / 8).
ad::Var seasonal_component(ParamBinding& bind, const ad::Var& x, const EncoderConfig& cfg);

/// Temporal convolutions 7 -> 5 -> 3 with ReLU between: B x (4h / 8) x T x N.
ad::Var trend_component(ParamBinding& bind, const ad::Var& x);

/// F + out(dropout(relu(A_hat lin(F) w_conv))) with A_hat acting on the node axis.
ad::Var spatial_stabilize(ParamBinding& bind, const ad::Var& f, const Tensor& adjacency,
                          const EncoderConfig& cfg, const ForwardMode& mode);

/// A_mem(H; F_phase) + H + alpha_mem * proj(F_phase).
ad::Var memory_augment(ParamBinding& bind, const ad::Var& h_last, const ad::Var& f_phase,
                       const EncoderConfig& cfg, AttentionTrace* trace = nullptr);

/// Full encoder: x[B, T, N, C] -> H_mem[B, T, N, 4h].
ad::Var encode(ParamBinding& bind, const ad::Var& x, const ad::Var& f_phase,
               const Tensor& adjacency, const EncoderConfig& cfg, const ForwardMode& mode,
               AttentionTrace* trace = nullptr);

}  // namespace mcpst::encoder

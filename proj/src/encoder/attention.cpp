#include <cmath>

#include "mcpst/encoder.hpp"
#include "mcpst/layers.hpp"

namespace mcpst::encoder {

using namespace mcpst::ad;

namespace {

void add_attention(ParameterStore& store, Rng& rng, const std::string& p, const EncoderConfig& cfg) {
  const std::size_t w = cfg.total();
  const std::size_t proj = cfg.heads * cfg.head_dim();
  for (const char* m : {"q", "k", "v"}) {
    layers::add_dense(store, rng, p + "." + m, w, proj, false);
    layers::add_dense(store, rng, p + ".phase_" + m, cfg.phase_width, proj);
  }
  layers::add_dense(store, rng, p + ".gate_h", w, cfg.heads, false);
  layers::add_dense(store, rng, p + ".gate_p", cfg.phase_width, cfg.heads);
  layers::add_dense(store, rng, p + ".bias_h", w, cfg.heads, false);
  layers::add_dense(store, rng, p + ".bias_p", cfg.phase_width, cfg.heads);
  layers::add_dense(store, rng, p + ".o", proj, w, false);
}

void add_conv(ParameterStore& store, Rng& rng, const std::string& name, std::size_t k,
              std::size_t in, std::size_t out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(k * in + out));
  Tensor w({k, in, out});
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  store.add(name, std::move(w));
}

// [B, N, T, heads * dk] -> [B, N, heads, T, dk]
Var split_heads(const Var& x, std::size_t heads) {
  const Shape& s = x.shape();
  return permute(reshape(x, {s[0], s[1], s[2], heads, s[3] / heads}), {0, 1, 3, 2, 4});
}

// Per-query modulation [B, N, T, heads] -> [B, N, heads, T, 1]
Var per_query(const Var& x) {
  const Shape& s = x.shape();
  return reshape(permute(x, {0, 1, 3, 2}), {s[0], s[1], s[3], s[2], 1});
}

}  // namespace

void register_params(ParameterStore& store, Rng& rng, const EncoderConfig& cfg) {
  const std::size_t w = cfg.total();
  const std::size_t sw = cfg.season_width();
  for (const char* name : {"enc.lstm_s", "enc.lstm_m", "enc.lstm_l", "enc.lstm_v"}) {
    layers::add_dense(store, rng, name, cfg.hidden + cfg.in_channels, 4 * cfg.hidden);
  }
  layers::add_dense(store, rng, "enc.sea1", cfg.in_channels, sw);
  layers::add_dense(store, rng, "enc.sea2", sw, sw, false);
  layers::add_layer_norm(store, "enc.sea_ln", sw);
  add_conv(store, rng, "enc.trend7", 7, cfg.in_channels, sw);
  add_conv(store, rng, "enc.trend5", 5, sw, sw);
  add_conv(store, rng, "enc.trend3", 3, sw, sw);
  layers::add_dense(store, rng, "enc.proj", w + 2 * sw, w, false);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "enc.layer" + std::to_string(l);
    add_attention(store, rng, p + ".att", cfg);
    layers::add_layer_norm(store, p + ".ln1", w);
    layers::add_dense(store, rng, p + ".ffn1", w, cfg.ffn_hidden);
    layers::add_dense(store, rng, p + ".ffn2", cfg.ffn_hidden, w);
    layers::add_layer_norm(store, p + ".ln2", w);
  }
  layers::add_dense(store, rng, "enc.stab_lin", w, w);
  layers::add_dense(store, rng, "enc.stab_conv", w, w, false);
  layers::add_dense(store, rng, "enc.stab_out", w, w);
  add_attention(store, rng, "enc.mem.att", cfg);
  layers::add_dense(store, rng, "enc.mem.proj", cfg.phase_width, w, false);
  layers::add_scalar(store, "enc.mem.alpha", 0.1);
}

Var phase_attention(ParamBinding& bind, const std::string& prefix, const Var& h_seq,
                    const Var& f_phase, const EncoderConfig& cfg, AttentionTrace* trace) {
  const Shape& s = h_seq.shape();  // B x T x N x w
  const std::size_t batch = s[0], steps = s[1], nodes = s[2];
  const Var hn = permute(h_seq, {0, 2, 1, 3});  // B x N x T x w
  const Var fp = reshape(f_phase, {batch, nodes, 1, f_phase.dim(2)});

  auto project = [&](const char* m) {
    return layers::dense(bind, prefix + "." + m, hn, false) +
           layers::dense(bind, prefix + ".phase_" + m, fp);
  };
  const Var q = split_heads(project("q"), cfg.heads);
  const Var k = split_heads(project("k"), cfg.heads);
  const Var v = split_heads(project("v"), cfg.heads);

  const Var gate = sigmoid(layers::dense(bind, prefix + ".gate_h", hn, false) +
                           layers::dense(bind, prefix + ".gate_p", fp));
  const Var bias = layers::dense(bind, prefix + ".bias_h", hn, false) +
                   layers::dense(bind, prefix + ".bias_p", fp);

  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  const Var scores = scale(bmm(q, k, true), inv_sqrt_dk) * per_query(gate) + per_query(bias);
  const Var probs = softmax_last(scores);  // B x N x heads x T x T
  if (trace) trace->probabilities.push_back(probs.value());

  const Var heads = permute(bmm(probs, v), {0, 1, 3, 2, 4});  // B x N x T x heads x dk
  const Var merged = reshape(heads, {batch, nodes, steps, cfg.heads * cfg.head_dim()});
  return permute(layers::dense(bind, prefix + ".o", merged, false), {0, 2, 1, 3});
}

Var transformer_layer(ParamBinding& bind, const std::string& prefix, const Var& h_seq,
                      const Var& f_phase, const EncoderConfig& cfg, AttentionTrace* trace) {
  const Var z = layers::layer_norm(
      bind, prefix + ".ln1", h_seq + phase_attention(bind, prefix + ".att", h_seq, f_phase, cfg, trace));
  const Var ffn =
      layers::dense(bind, prefix + ".ffn2", gelu(layers::dense(bind, prefix + ".ffn1", z)));
  return layers::layer_norm(bind, prefix + ".ln2", z + ffn);
}

Var seasonal_component(ParamBinding& bind, const Var& x, const EncoderConfig&) {
  const Var hidden = relu(layers::dense(bind, "enc.sea1", x));
  return layers::layer_norm(bind, "enc.sea_ln", layers::dense(bind, "enc.sea2", hidden, false));
}

Var trend_component(ParamBinding& bind, const Var& x) {
  Var y = relu(conv_time(x, bind("enc.trend7")));
  y = relu(conv_time(y, bind("enc.trend5")));
  y = conv_time(y, bind("enc.trend3"));
  return permute(y, {0, 3, 1, 2});
}

Var spatial_stabilize(ParamBinding& bind, const Var& f, const Tensor& adjacency,
                      const EncoderConfig& cfg, const ForwardMode& mode) {
  const Var lin = layers::dense(bind, "enc.stab_lin", f);
  Var act = relu(layers::dense(bind, "enc.stab_conv", mix_axis(adjacency, lin, 2), false));
  if (mode.train && cfg.dropout > 0.0) {
    if (!mode.rng) throw std::invalid_argument("training-mode dropout needs an RNG");
    const double keep = 1.0 - cfg.dropout;
    Tensor mask(act.shape());
    for (double& m : mask.values()) m = mode.rng->uniform() < keep ? 1.0 / keep : 0.0;
    act = act * constant(std::move(mask));
  }
  return f + layers::dense(bind, "enc.stab_out", act);
}

Var memory_augment(ParamBinding& bind, const Var& h_last, const Var& f_phase,
                   const EncoderConfig& cfg, AttentionTrace* trace) {
  const Shape& s = h_last.shape();
  const Var proj = reshape(layers::dense(bind, "enc.mem.proj", f_phase, false),
                           {s[0], 1, s[2], s[3]});
  return phase_attention(bind, "enc.mem.att", h_last, f_phase, cfg, trace) + h_last +
         bind("enc.mem.alpha") * proj;
}

Var encode(ParamBinding& bind, const Var& x, const Var& f_phase, const Tensor& adjacency,
           const EncoderConfig& cfg, const ForwardMode& mode, AttentionTrace* trace) {
  const std::size_t steps = x.dim(1);
  const std::size_t w = cfg.total();
  const Var multi = multiscale_encode(bind, x, cfg);
  const Var sea = seasonal_component(bind, x, cfg);
  const Var trend = permute(trend_component(bind, x), {0, 2, 3, 1});
  const Var pe = constant(positional_encoding(steps, w).reshaped({steps, 1, w}));
  Var h = layers::dense(bind, "enc.proj", concat({multi, sea, trend}, 3), false) + pe;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    h = transformer_layer(bind, "enc.layer" + std::to_string(l), h, f_phase, cfg, trace);
  }
  h = spatial_stabilize(bind, h, adjacency, cfg, mode);
  return memory_augment(bind, h, f_phase, cfg, trace);
}

}  // namespace mcpst::encoder

#include "mcpst/model.hpp"

#include <map>
#include <stdexcept>
#include <string>

#include "mcpst/diffengine.hpp"
#include "mcpst/fusion.hpp"
#include "mcpst/layers.hpp"
#include "mcpst/predict.hpp"
#include "mcpst/serialize.hpp"
#include "mcpst/specengine.hpp"
#include "mcpst/syncengine.hpp"

namespace mcpst {

using namespace mcpst::ad;

namespace {

diffusion::DiffusionConfig diffusion_config(const RunConfig& cfg) {
  diffusion::DiffusionConfig d;
  d.k_steps = cfg.k_diff;
  return d;
}

sync::SyncConfig sync_config(const RunConfig& cfg) {
  sync::SyncConfig s;
  s.k_steps = cfg.k_sync;
  s.dt = cfg.sync_dt;
  return s;
}

const std::string kMomentFirst = "adamw.m/";
const std::string kMomentSecond = "adamw.v/";
const std::string kStepCount = "adamw.step";

}  // namespace

GraphContext GraphContext::build(graph::TrafficNetwork net, const RunConfig& cfg) {
  diffusion::check_stability(diffusion_config(cfg), net.max_degree());
  GraphContext ctx{std::move(net), {}, std::nullopt, {}};
  ctx.laplacians = graph::laplacians(ctx.network);
  ctx.normalized_adjacency = graph::normalized_adjacency(ctx.network);
  if (!ctx.network.directed()) ctx.basis = graph::eigendecompose(ctx.laplacians, cfg.k_spectral);
  return ctx;
}

Model::Model(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const std::size_t d = cfg_.hidden;
  const std::size_t h = cfg_.horizon;
  layers::add_dense(params_, rng, "embed", cfg_.history * cfg_.input_channels(), d);
  diffusion::register_params(params_, rng, d, h);
  sync::register_params(params_, rng, d, h);
  spectral::register_params(params_, rng, cfg_.k_spectral, d, h);
  fusion::register_params(params_, rng, d);
  encoder::register_params(params_, rng, encoder_config());
  layers::add_dense(params_, rng, "readout", 4 * d, d);
  predict::register_params(params_, rng, d, h);
}

void Model::set_data_stats(double mean, double std, double interval_minutes, double fvar_mean,
                           double fvar_std) {
  cfg_.data_mean = mean;
  cfg_.data_std = std;
  cfg_.data_interval_minutes = interval_minutes;
  cfg_.data_fvar_mean = fvar_mean;
  cfg_.data_fvar_std = fvar_std;
}

encoder::EncoderConfig Model::encoder_config() const {
  encoder::EncoderConfig e;
  e.hidden = cfg_.hidden;
  e.heads = cfg_.heads;
  e.layers = cfg_.layers;
  e.ffn_hidden = cfg_.ffn_width();
  e.dropout = cfg_.dropout;
  e.in_channels = cfg_.input_channels();
  e.phase_width = fusion::total_width(cfg_.hidden);
  return e;
}

ForwardResult Model::forward(ParamBinding& bind, const Tensor& x, const GraphContext& graph,
                             const encoder::ForwardMode& mode, ForwardTrace* trace) const {
  if (x.rank() != 4 || x.dim(1) != cfg_.history || x.dim(2) != graph.network.n_nodes() ||
      x.dim(3) != cfg_.input_channels()) {
    throw ShapeError("model input must be B x " + std::to_string(cfg_.history) + " x " +
                     std::to_string(graph.network.n_nodes()) + " x " +
                     std::to_string(cfg_.input_channels()) + ", got " + shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t n = x.dim(2);
  const std::size_t d = cfg_.hidden;
  const std::size_t h = cfg_.horizon;

  const Var xv = constant(x);
  const Var features = layers::dense(
      bind, "embed", reshape(permute(xv, {0, 2, 1, 3}), {b, n, cfg_.history * x.dim(3)}));

  const auto dcfg = diffusion_config(cfg_);
  diffusion::DiffusionState diff =
      diffusion::init_state(features, diffusion::estimate_sources(bind, features));
  diff = diffusion::run_diffusion(std::move(diff), graph.laplacians.combinatorial,
                                  bind("diff.kappa_raw"), bind("diff.capacity_raw"), dcfg);
  const Var v_diff = diffusion::diffusion_predict(bind, diff);

  const Var nu = reshape(sync::estimate_frequencies(bind, features), {b, n});
  const Var gamma_local = reshape(sync::estimate_local_coupling(bind, features), {b, n});
  sync::PhaseState phase = sync::run_sync(
      sync::init_phases(features), graph.network.adjacency(), nu, gamma_local,
      bind("sync.gamma_global_raw"), sync_config(cfg_), trace ? &trace->phase_steps : nullptr);
  const sync::SyncOutput synced = sync::sync_predict(bind, features, phase.phases);

  fusion::PhaseBundle bundle;
  bundle.f_diff = diff.t_state;
  bundle.f_sync = synced.z_sync;
  bundle.v_diff = v_diff;
  bundle.v_sync = synced.v_sync;
  if (graph.basis) {
    bundle.f_spec = spectral::spectral_features(bind, *graph.basis, b).f_spec;
    bundle.v_spec = spectral::spectral_predict(bind, *graph.basis, b);
  } else {
    bundle.f_spec = constant(Tensor({b, n, d / 4}));
    bundle.v_spec = constant(Tensor({b, n, h}));
  }
  const Var f_cat = bundle.concatenated();
  const Var alpha = fusion::attention_weights(bind, f_cat);
  const Var fused =
      fusion::residual_fuse(bind, fusion::weighted_combine(bind, bundle, alpha), diff.t_state);

  const encoder::EncoderConfig ecfg = encoder_config();
  const Var memory = encoder::encode(bind, xv, f_cat, graph.normalized_adjacency, ecfg, mode,
                                     trace ? &trace->attention : nullptr);
  const Var last = reshape(slice(memory, 1, cfg_.history - 1, cfg_.history), {b, n, ecfg.total()});
  const Var head_in = fused + layers::dense(bind, "readout", last);

  const predict::HeadOutput heads = predict::horizon_heads(bind, head_in, h);

  ForwardResult out;
  out.y_model = heads.y_hat;
  out.sigma2 = heads.sigma2;
  out.y_hat = predict::neural_consensus(heads.y_hat, bundle.v_diff, bundle.v_sync, bundle.v_spec,
                                        alpha, bind("predict.consensus_raw"));
  out.alpha = alpha;
  out.v_diff = bundle.v_diff;
  out.v_sync = bundle.v_sync;
  out.v_spec = bundle.v_spec;
  out.phases = phase.phases;
  out.order = sync::order_parameter(phase.phases);
  out.unwrapped_phases = phase.unwrapped;
  return out;
}

LossTerms Model::loss(const ForwardResult& out, const Tensor& target) const {
  LossTerms terms;
  terms.task = predict::task_loss(out.y_hat, out.sigma2, constant(target), cfg_.eta, cfg_.nll);
  const predict::PhaseLoss phase =
      predict::phase_loss(out.alpha, out.v_diff, out.v_sync, out.v_spec, cfg_.beta);
  terms.phase = phase.total;
  terms.js = phase.js;
  terms.simplex = phase.simplex;
  terms.total = terms.task + scale(terms.phase, cfg_.lambda1);
  return terms;
}

Forecast Model::predict(ParameterStore& params, const Tensor& x, const GraphContext& graph) const {
  ParamBinding bind(params, false);
  const ForwardResult out = forward(bind, x, graph);
  return {out.y_hat.value(), out.sigma2.value()};
}

void Model::save(const std::filesystem::path& path, const AdamW* opt) const {
  ModelFile file;
  file.config_text = cfg_.to_text();
  for (const Parameter& p : params_.all()) file.records.emplace_back(p.name, p.value);
  if (opt) {
    file.records.emplace_back(kStepCount,
                              Tensor::scalar(static_cast<double>(opt->step_count())));
    for (const auto& [name, m] : opt->first_moment()) file.records.emplace_back(kMomentFirst + name, m);
    for (const auto& [name, v] : opt->second_moment()) {
      file.records.emplace_back(kMomentSecond + name, v);
    }
  }
  write_model_file(path, file);
}

Model Model::load(const std::filesystem::path& path, AdamW* opt) {
  const ModelFile file = read_model_file(path);
  Model model(RunConfig::parse(file.config_text));
  for (Parameter& p : model.params_.all()) {
    const Tensor* t = file.find(p.name);
    if (!t) throw std::runtime_error("model file lacks parameter '" + p.name + "'");
    if (t->shape() != p.value.shape()) {
      throw ShapeError("parameter '" + p.name + "' has shape " + shape_str(t->shape()) +
                       ", expected " + shape_str(p.value.shape()));
    }
    p.value = *t;
  }
  if (opt) {
    std::map<std::string, Tensor> m, v;
    std::int64_t steps = 0;
    for (const auto& [name, t] : file.records) {
      if (name == kStepCount) {
        steps = static_cast<std::int64_t>(t.item());
      } else if (name.starts_with(kMomentFirst)) {
        m.emplace(name.substr(kMomentFirst.size()), t);
      } else if (name.starts_with(kMomentSecond)) {
        v.emplace(name.substr(kMomentSecond.size()), t);
      }
    }
    opt->restore(steps, std::move(m), std::move(v));
  }
  return model;
}

}  // namespace mcpst

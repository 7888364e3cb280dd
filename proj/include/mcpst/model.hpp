#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "mcpst/config.hpp"
#include "mcpst/encoder.hpp"
#include "mcpst/graphcore.hpp"
#include "mcpst/optim.hpp"
#include "mcpst/params.hpp"

namespace mcpst {

/// Everything derived from the road network that the forward pass reuses.
struct GraphContext {
  graph::TrafficNetwork network;
  graph::LaplacianPair laplacians;
  std::optional<graph::SpectralBasis> basis;  // absent for directed networks
  Tensor normalized_adjacency;

  /// Throws when the diffusion step is unstable for this network or when
  /// k_spectral exceeds the node count.
  static GraphContext build(graph::TrafficNetwork net, const RunConfig& cfg);
};

struct ForwardResult {
  ad::Var y_model;    // B x N x H, encoder heads
  ad::Var sigma2;     // B x N x H
  ad::Var y_hat;      // B x N x H, after consensus
  ad::Var alpha;      // B x N x 3
  ad::Var v_diff;     // B x N x H
  ad::Var v_sync;
  ad::Var v_spec;
  ad::Var phases;     // B x N, wrapped
  ad::Var order;      // B
  Tensor unwrapped_phases;
};

/// Optional captures for export and checks.
struct ForwardTrace {
  encoder::AttentionTrace attention;
  std::vector<Tensor> phase_steps;
};

struct Forecast {
  Tensor y_hat;   // B x N x H, normalized
  Tensor sigma2;  // B x N x H
};

struct LossTerms {
  ad::Var total;  // task + lambda1 * phase
  ad::Var task;
  ad::Var phase;
  ad::Var js;
  ad::Var simplex;
};

class Model {
 public:
  /// Registers every parameter, initialised from cfg.seed.
  explicit Model(RunConfig cfg);

  const RunConfig& config() const noexcept { return cfg_; }
  /// Only the data.* statistics may change after construction.
  void set_data_stats(double mean, double std, double interval_minutes, double fvar_mean,
                      double fvar_std);

  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

  encoder::EncoderConfig encoder_config() const;

  /// x: B x L x N x C (normalized). Dropout runs only when mode.train is set.
  ForwardResult forward(ParamBinding& bind, const Tensor& x, const GraphContext& graph,
                        const encoder::ForwardMode& mode = {},
                        ForwardTrace* trace = nullptr) const;

  /// target: B x N x H (normalized).
  LossTerms loss(const ForwardResult& out, const Tensor& target) const;

  /// Eval-mode forecast with `params` (this model's own store or an adapted copy).
  Forecast predict(ParameterStore& params, const Tensor& x, const GraphContext& graph) const;
  Forecast predict(const Tensor& x, const GraphContext& graph) { return predict(params_, x, graph); }

  /// Parameters (and optimizer moments when given) with the config text.
  void save(const std::filesystem::path& path, const AdamW* opt = nullptr) const;
  static Model load(const std::filesystem::path& path, AdamW* opt = nullptr);

 private:
  RunConfig cfg_;
  ParameterStore params_;
};

}  // namespace mcpst

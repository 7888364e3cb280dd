#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "mcpst/params.hpp"

namespace mcpst {

/// Builds a scalar loss from parameters bound through the given binding.
using LossGraph = std::function<ad::Var(ParamBinding&)>;

/// Zeroes grads, evaluates the graph, back-propagates and stores the
/// gradient of every trainable parameter. Returns the loss value.
double forward_backward(ParameterStore& params, const LossGraph& graph);

/// Evaluates the loss without recording gradients.
double evaluate_loss(ParameterStore& params, const LossGraph& graph);

struct FdOptions {
  double epsilon = 1e-5;
  /// Entries probed per tensor; 0 probes every entry.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct FdReport {
  double max_error = 0.0;
  std::size_t probes = 0;
  /// Probes where one side crossed a relu/clip/mod/atan2 branch and the
  /// one-sided difference on the other side was used.
  std::size_t one_sided = 0;
  /// Probes where both sides crossed a branch; the central difference is kept.
  std::size_t straddled = 0;
};

/// Compares the grads currently stored in `params` with central differences.
/// Error per scalar is |g - g_fd| / max(1, |g|, |g_fd|). A perturbation that
/// changes the branch of a piecewise operation leaves the smooth piece the
/// gradient belongs to, so that side is dropped in favour of the other.
FdReport fd_gradient_report(ParameterStore& params, const LossGraph& graph,
                            const FdOptions& opt = {});
/// fd_gradient_report(...).max_error.
double fd_gradient_error(ParameterStore& params, const LossGraph& graph, const FdOptions& opt = {});

/// forward_backward followed by fd_gradient_error.
double finite_difference_check(ParameterStore& params, const LossGraph& graph,
                               const FdOptions& opt = {});
FdReport finite_difference_report(ParameterStore& params, const LossGraph& graph,
                                  const FdOptions& opt = {});

}  // namespace mcpst

#include "mcpst/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mcpst/rng.hpp"

namespace mcpst {

double forward_backward(ParameterStore& params, const LossGraph& graph) {
  params.zero_grad();
  ParamBinding bind(params, true);
  ad::Var loss = graph(bind);
  ad::backward(loss);
  bind.accumulate_grads();
  return loss.item();
}

double evaluate_loss(ParameterStore& params, const LossGraph& graph) {
  ParamBinding bind(params, false);
  return graph(bind).item();
}

namespace {

struct TracedLoss {
  double value;
  std::vector<long long> branches;
};

TracedLoss traced_loss(ParameterStore& params, const LossGraph& graph) {
  ad::BranchTrace trace;
  const double v = evaluate_loss(params, graph);
  return {v, trace.codes()};
}

}  // namespace

FdReport fd_gradient_report(ParameterStore& params, const LossGraph& graph, const FdOptions& opt) {
  if (opt.epsilon < 1e-7 || opt.epsilon > 1e-3) {
    throw std::invalid_argument("finite-difference epsilon must lie in [1e-7, 1e-3]");
  }
  const TracedLoss base = traced_loss(params, graph);
  Rng rng(opt.seed);
  FdReport report;
  for (auto& p : params.all()) {
    if (!p.trainable) continue;
    std::vector<std::size_t> probe(p.value.size());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (opt.max_entries_per_tensor > 0 && probe.size() > opt.max_entries_per_tensor) {
      rng.shuffle(probe);
      probe.resize(opt.max_entries_per_tensor);
      std::sort(probe.begin(), probe.end());
    }
    for (std::size_t i : probe) {
      const double saved = p.value[i];
      p.value[i] = saved + opt.epsilon;
      const TracedLoss up = traced_loss(params, graph);
      p.value[i] = saved - opt.epsilon;
      const TracedLoss down = traced_loss(params, graph);
      p.value[i] = saved;
      const bool up_ok = up.branches == base.branches;
      const bool down_ok = down.branches == base.branches;
      double fd = (up.value - down.value) / (2.0 * opt.epsilon);
      if (up_ok && !down_ok) {
        fd = (up.value - base.value) / opt.epsilon;
        ++report.one_sided;
      } else if (!up_ok && down_ok) {
        fd = (base.value - down.value) / opt.epsilon;
        ++report.one_sided;
      } else if (!up_ok) {
        ++report.straddled;
      }
      const double g = p.grad[i];
      const double err = std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)});
      report.max_error = std::max(report.max_error, err);
      ++report.probes;
    }
  }
  return report;
}

double fd_gradient_error(ParameterStore& params, const LossGraph& graph, const FdOptions& opt) {
  return fd_gradient_report(params, graph, opt).max_error;
}

double finite_difference_check(ParameterStore& params, const LossGraph& graph,
                               const FdOptions& opt) {
  return finite_difference_report(params, graph, opt).max_error;
}

FdReport finite_difference_report(ParameterStore& params, const LossGraph& graph,
                                  const FdOptions& opt) {
  forward_backward(params, graph);
  return fd_gradient_report(params, graph, opt);
}

}  // namespace mcpst

#include <cmath>

#include "mcpst/metalearn.hpp"

namespace mcpst::meta {

BatchObjective model_objective(const Model& model, const data::WindowSet& windows,
                               const GraphContext& graph) {
  return [&model, &windows, &graph](ParameterStore& params, std::span<const std::size_t> ids,
                                    bool grad, std::uint64_t noise_seed) {
    const data::Batch batch = windows.batch(ids);
    Rng rng(noise_seed);
    encoder::ForwardMode mode{grad, grad ? &rng : nullptr};
    ParamBinding bind(params, grad);
    const ForwardResult out = model.forward(bind, batch.x, graph, mode);
    const LossTerms terms = model.loss(out, batch.y);
    if (grad) {
      params.zero_grad();
      ad::backward(terms.total);
      bind.accumulate_grads();
    }
    return LossValue{terms.total.item(), terms.task.item(), terms.phase.item()};
  };
}

double window_mae(const Model& model, ParameterStore& params, const data::WindowSet& windows,
                  const GraphContext& graph, std::span<const std::size_t> ids,
                  std::size_t batch_size) {
  std::vector<std::size_t> all;
  if (ids.empty()) {
    all.resize(windows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    ids = all;
  }
  if (ids.empty()) throw std::invalid_argument("window_mae over an empty window set");
  double abs_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t lo = 0; lo < ids.size(); lo += batch_size) {
    const auto chunk = ids.subspan(lo, std::min(batch_size, ids.size() - lo));
    const data::Batch batch = windows.batch(chunk);
    const Forecast f = model.predict(params, batch.x, graph);
    for (std::size_t i = 0; i < f.y_hat.size(); ++i) abs_sum += std::abs(f.y_hat[i] - batch.y[i]);
    count += f.y_hat.size();
  }
  return abs_sum / static_cast<double>(count);
}

}  // namespace mcpst::meta

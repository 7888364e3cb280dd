#include <cmath>

#include "mcpst/dataio.hpp"

namespace mcpst::data {

std::size_t window_count(std::size_t steps, std::size_t history, std::size_t horizon) {
  if (steps < history + horizon) {
    throw DataError("series of " + std::to_string(steps) + " steps is shorter than history " +
                    std::to_string(history) + " + horizon " + std::to_string(horizon));
  }
  return steps - history - horizon + 1;
}

std::vector<WindowSample> make_windows(const Tensor& inputs, const Tensor& targets,
                                       std::size_t history, std::size_t horizon) {
  if (inputs.rank() != 3 || targets.rank() != 2 || inputs.dim(0) != targets.dim(0) ||
      inputs.dim(1) != targets.dim(1)) {
    throw ShapeError("make_windows: inputs " + shape_str(inputs.shape()) + " and targets " +
                     shape_str(targets.shape()) + " disagree");
  }
  const std::size_t count = window_count(inputs.dim(0), history, horizon);
  const std::size_t n = inputs.dim(1);
  const std::size_t c = inputs.dim(2);
  std::vector<WindowSample> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    WindowSample w;
    w.start_index = s;
    w.x = Tensor({history, n, c},
                 std::vector<double>(inputs.data() + s * n * c, inputs.data() + (s + history) * n * c));
    w.y = Tensor({horizon, n}, std::vector<double>(targets.data() + (s + history) * n,
                                                   targets.data() + (s + history + horizon) * n));
    out.push_back(std::move(w));
  }
  return out;
}

WindowSet::WindowSet(const PreparedSeries& data, std::size_t history, std::size_t horizon,
                     Range range, std::size_t stride)
    : data_(&data), history_(history), horizon_(horizon) {
  if (stride == 0) throw std::invalid_argument("window stride must be positive");
  if (range.end > data.targets.dim(0) || range.begin > range.end) {
    throw DataError("window range exceeds the series");
  }
  const std::size_t count = window_count(range.size(), history, horizon);
  for (std::size_t s = 0; s < count; s += stride) starts_.push_back(range.begin + s);
}

Batch WindowSet::batch(std::span<const std::size_t> ids) const {
  const std::size_t n = data_->inputs.dim(1);
  const std::size_t c = data_->inputs.dim(2);
  const std::size_t b = ids.size();
  Batch out{Tensor({b, history_, n, c}), Tensor({b, n, horizon_})};
  for (std::size_t k = 0; k < b; ++k) {
    if (ids[k] >= starts_.size()) throw std::out_of_range("window id outside the set");
    const std::size_t s = starts_[ids[k]];
    const double* src = data_->inputs.data() + s * n * c;
    std::copy(src, src + history_ * n * c, out.x.data() + k * history_ * n * c);
    for (std::size_t h = 0; h < horizon_; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        out.y[(k * n + i) * horizon_ + h] = mat(data_->targets, s + history_ + h, i);
      }
    }
  }
  return out;
}

Batch WindowSet::all() const {
  std::vector<std::size_t> ids(starts_.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return batch(ids);
}

SplitRanges split_single_city(std::size_t steps) {
  SplitRanges r;
  const std::size_t a = steps * 7 / 10;
  const std::size_t b = steps * 8 / 10;
  r.train = {0, a};
  r.val = {a, b};
  r.adapt = {a, a};
  r.test = {b, steps};
  return r;
}

SplitRanges split_target_city(std::size_t steps, double interval_minutes, double adapt_days) {
  if (!(interval_minutes > 0.0) || !(adapt_days > 0.0)) {
    throw std::invalid_argument("interval and adaptation days must be positive");
  }
  const auto adapt = static_cast<std::size_t>(std::llround(adapt_days * 1440.0 / interval_minutes));
  if (adapt >= steps) {
    throw DataError("adaptation window of " + std::to_string(adapt) +
                    " steps leaves no test data in a series of " + std::to_string(steps));
  }
  SplitRanges r;
  r.train = {0, 0};
  r.val = {0, 0};
  r.adapt = {0, adapt};
  r.test = {adapt, steps};
  return r;
}

std::pair<Range, Range> holdout_tail(Range range, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction in [0, 1)");
  const auto tail = static_cast<std::size_t>(std::floor(static_cast<double>(range.size()) * fraction));
  const std::size_t cut = range.end - tail;
  return {{range.begin, cut}, {cut, range.end}};
}

}  // namespace mcpst::data

#include <cmath>

#include "mcpst/dataio.hpp"

namespace mcpst::data {

namespace {

void check_matrix(const Tensor& values, const char* what) {
  if (values.rank() != 2 || values.dim(0) == 0 || values.dim(1) == 0) {
    throw ShapeError(std::string(what) + " expects a non-empty T x N matrix, got " +
                     shape_str(values.shape()));
  }
}

void check_range(const Tensor& values, Range range) {
  if (range.begin >= range.end || range.end > values.dim(0)) {
    throw DataError("statistics range [" + std::to_string(range.begin) + ", " +
                    std::to_string(range.end) + ") invalid for " + std::to_string(values.dim(0)) +
                    " rows");
  }
}

// Spreads below this are treated as constant.
bool degenerate_spread(double std, double mean) {
  return !(std > 1e-12 * std::max(1.0, std::abs(mean)));
}

}  // namespace

Tensor ZScore::normalize(const Tensor& x) const {
  Tensor out = x;
  for (double& v : out.values()) v = (v - mean) / std;
  return out;
}

Tensor ZScore::denormalize(const Tensor& x) const {
  Tensor out = x;
  for (double& v : out.values()) v = v * std + mean;
  return out;
}

ZScore fit_zscore(const Tensor& values, Range range) {
  check_matrix(values, "fit_zscore");
  check_range(values, range);
  const std::size_t n = values.dim(1);
  const double count = static_cast<double>(range.size() * n);
  double sum = 0.0;
  for (std::size_t t = range.begin; t < range.end; ++t) {
    for (std::size_t j = 0; j < n; ++j) sum += mat(values, t, j);
  }
  ZScore z;
  z.mean = sum / count;
  double sq = 0.0;
  for (std::size_t t = range.begin; t < range.end; ++t) {
    for (std::size_t j = 0; j < n; ++j) sq += (mat(values, t, j) - z.mean) * (mat(values, t, j) - z.mean);
  }
  z.std = std::sqrt(sq / count);
  if (degenerate_spread(z.std, z.mean)) {
    throw DataError("series has zero standard deviation over the statistics range");
  }
  return z;
}

Tensor rolling_variance(const Tensor& values, std::size_t window) {
  check_matrix(values, "rolling_variance");
  if (window == 0) throw std::invalid_argument("rolling window must be positive");
  const std::size_t steps = values.dim(0);
  const std::size_t n = values.dim(1);
  Tensor out({steps, n});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t lo = t + 1 >= window ? t + 1 - window : 0;
      const double count = static_cast<double>(t + 1 - lo);
      double mean = 0.0;
      for (std::size_t s = lo; s <= t; ++s) mean += mat(values, s, j);
      mean /= count;
      double var = 0.0;
      for (std::size_t s = lo; s <= t; ++s) var += (mat(values, s, j) - mean) * (mat(values, s, j) - mean);
      mat(out, t, j) = var / count;
    }
  }
  return out;
}

FeatureStats fit_feature_stats(const Tensor& values, std::size_t window, Range range) {
  check_matrix(values, "fit_feature_stats");
  check_range(values, range);
  const Tensor var = rolling_variance(values, window);
  const std::size_t n = values.dim(1);
  const double count = static_cast<double>(range.size() * n);
  FeatureStats fs;
  double sum = 0.0;
  for (std::size_t t = range.begin; t < range.end; ++t) {
    for (std::size_t j = 0; j < n; ++j) sum += mat(var, t, j);
  }
  fs.fvar_mean = sum / count;
  double sq = 0.0;
  for (std::size_t t = range.begin; t < range.end; ++t) {
    for (std::size_t j = 0; j < n; ++j) sq += (mat(var, t, j) - fs.fvar_mean) * (mat(var, t, j) - fs.fvar_mean);
  }
  fs.fvar_std = std::sqrt(sq / count);
  if (degenerate_spread(fs.fvar_std, fs.fvar_mean)) fs.fvar_std = 1.0;
  return fs;
}

Tensor augment_features(const Tensor& values, const graph::TrafficNetwork& net,
                        std::size_t window, const FeatureStats& stats) {
  check_matrix(values, "augment_features");
  const std::size_t steps = values.dim(0);
  const std::size_t n = values.dim(1);
  if (net.n_nodes() != n) {
    throw ShapeError("series has " + std::to_string(n) + " nodes but the network has " +
                     std::to_string(net.n_nodes()));
  }
  const auto& deg = net.degrees();
  double deg_mean = 0.0;
  for (double d : deg) deg_mean += d;
  deg_mean /= static_cast<double>(n);
  double deg_sq = 0.0;
  for (double d : deg) deg_sq += (d - deg_mean) * (d - deg_mean);
  const double deg_std = std::sqrt(deg_sq / static_cast<double>(n));
  const bool flat_degree = degenerate_spread(deg_std, deg_mean);

  const Tensor var = rolling_variance(values, window);
  const Tensor& a = net.adjacency();
  Tensor out({steps, n, 4});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      double* f = out.data() + (t * n + i) * 4;
      f[0] = flat_degree ? 0.0 : (deg[i] - deg_mean) / deg_std;
      f[1] = (mat(var, t, i) - stats.fvar_mean) / stats.fvar_std;
      double influence = 0.0;
      for (std::size_t j = 0; j < n; ++j) influence += mat(a, i, j) * mat(values, t, j);
      f[2] = influence / deg[i];
      f[3] = t == 0 ? 0.0 : mat(values, t, i) - mat(values, t - 1, i);
    }
  }
  return out;
}

namespace {

PreparedSeries assemble(const TrafficSeries& series, const graph::TrafficNetwork& net,
                        std::size_t history, bool augment, const ZScore& scale,
                        const FeatureStats& features) {
  PreparedSeries p;
  p.scale = scale;
  p.features = features;
  p.targets = scale.normalize(series.values);
  const std::size_t steps = series.steps();
  const std::size_t n = series.nodes();
  const std::size_t channels = augment ? 5 : 1;
  p.inputs = Tensor({steps, n, channels});
  Tensor extra;
  if (augment) extra = augment_features(p.targets, net, history, features);
  for (std::size_t r = 0; r < steps * n; ++r) {
    p.inputs[r * channels] = p.targets[r];
    for (std::size_t c = 1; c < channels; ++c) p.inputs[r * channels + c] = extra[r * 4 + c - 1];
  }
  return p;
}

}  // namespace

PreparedSeries prepare_series(const TrafficSeries& series, const graph::TrafficNetwork& net,
                              std::size_t history, bool augment, Range fit_range) {
  const ZScore scale = fit_zscore(series.values, fit_range);
  FeatureStats features;
  if (augment) features = fit_feature_stats(scale.normalize(series.values), history, fit_range);
  return assemble(series, net, history, augment, scale, features);
}

PreparedSeries prepare_series(const TrafficSeries& series, const graph::TrafficNetwork& net,
                              std::size_t history, bool augment, const ZScore& scale,
                              const FeatureStats& features) {
  if (!(scale.std > 0.0) || !(features.fvar_std > 0.0)) {
    throw DataError("normalization statistics must have positive spread");
  }
  return assemble(series, net, history, augment, scale, features);
}

}  // namespace mcpst::data

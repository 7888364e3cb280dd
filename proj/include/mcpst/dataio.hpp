#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcpst/graphcore.hpp"
#include "mcpst/rng.hpp"
#include "mcpst/tensor.hpp"

namespace mcpst::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrafficSeries {
  Tensor values;                  // T x N, raw sensor units
  double interval_minutes = 5.0;  // spacing between rows
  double start_minutes = 0.0;     // first timestamp, minutes since 1970-01-01

  std::size_t steps() const { return values.dim(0); }
  std::size_t nodes() const { return values.dim(1); }
};

/// Timestamps are ISO dates ("2024-01-01 00:05[:00]", 'T' separator allowed)
/// or plain numbers read as minutes.
double parse_timestamp(std::string_view text);
std::string format_timestamp(double minutes);

/// CSV with header `timestamp,node0,...`. Rows must be strictly increasing and
/// evenly spaced; empty or non-numeric cells are reported, never imputed.
TrafficSeries load_series(const std::filesystem::path& path);
void save_series(const std::filesystem::path& path, const TrafficSeries& series);

/// CSV with header `src,dst,weight`.
std::vector<graph::Edge> load_edges(const std::filesystem::path& path);
void save_edges(const std::filesystem::path& path, const graph::TrafficNetwork& net);

struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct ZScore {
  double mean = 0.0;
  double std = 1.0;

  Tensor normalize(const Tensor& x) const;
  Tensor denormalize(const Tensor& x) const;
};

/// Statistics over rows [range.begin, range.end) of a T x N matrix.
ZScore fit_zscore(const Tensor& values, Range range);

/// Population variance over the trailing `window` rows (fewer at the start): T x N.
Tensor rolling_variance(const Tensor& values, std::size_t window);

struct FeatureStats {
  double fvar_mean = 0.0;
  double fvar_std = 1.0;
};
FeatureStats fit_feature_stats(const Tensor& values, std::size_t window, Range range);

/// T x N x 4: degree (z-scored across nodes), trailing variance (z-scored with
/// `stats`), neighbour influence A x_t / deg, and x_t - x_{t-1}.
Tensor augment_features(const Tensor& values, const graph::TrafficNetwork& net,
                        std::size_t window, const FeatureStats& stats);

struct PreparedSeries {
  Tensor inputs;   // T x N x C; channel 0 is the normalized value
  Tensor targets;  // T x N, normalized
  ZScore scale;
  FeatureStats features;
};

/// Normalizes and augments with statistics fitted on `fit_range`.
PreparedSeries prepare_series(const TrafficSeries& series, const graph::TrafficNetwork& net,
                              std::size_t history, bool augment, Range fit_range);
/// Same with statistics supplied by the caller (e.g. from a saved model).
PreparedSeries prepare_series(const TrafficSeries& series, const graph::TrafficNetwork& net,
                              std::size_t history, bool augment, const ZScore& scale,
                              const FeatureStats& features);

/// T - L - H + 1; throws when T < L + H.
std::size_t window_count(std::size_t steps, std::size_t history, std::size_t horizon);

struct WindowSample {
  Tensor x;  // L x N x C
  Tensor y;  // H x N
  std::size_t start_index = 0;
};

std::vector<WindowSample> make_windows(const Tensor& inputs, const Tensor& targets,
                                       std::size_t history, std::size_t horizon);

struct Batch {
  Tensor x;  // B x L x N x C
  Tensor y;  // B x N x H
};

/// Windows lying wholly inside a row range, every `stride` rows.
class WindowSet {
 public:
  WindowSet(const PreparedSeries& data, std::size_t history, std::size_t horizon, Range range,
            std::size_t stride = 1);

  std::size_t size() const { return starts_.size(); }
  std::span<const std::size_t> starts() const { return starts_; }
  std::size_t nodes() const { return data_->targets.dim(1); }

  /// Gathers windows by position in this set.
  Batch batch(std::span<const std::size_t> ids) const;
  Batch all() const;

 private:
  const PreparedSeries* data_;
  std::size_t history_;
  std::size_t horizon_;
  std::vector<std::size_t> starts_;
};

struct SplitRanges {
  Range train;
  Range val;
  Range adapt;
  Range test;
};

/// 70/10/20 train/val/test.
SplitRanges split_single_city(std::size_t steps);
/// Target city: the first adapt_days days adapt, the rest test.
SplitRanges split_target_city(std::size_t steps, double interval_minutes, double adapt_days);
/// Range minus its last `fraction`, and that tail.
std::pair<Range, Range> holdout_tail(Range range, double fraction = 0.1);

enum class Topology { grid, ring, random_geometric };

/// Synthetic city. The series is
///   base + amplitude sin(phi_i(t)) - pulses_i(t) + noise,
/// where phi follows Kuramoto dynamics with a one-day period,
///   dphi_i/dt = w0 (1 + freq_spread n_i) + w0 coupling sum_j A_ij sin(phi_j - phi_i),
/// integrated with RK4 at the sampling interval (w0 = 2 pi / 1440 per minute),
/// and each congestion pulse of size m released at node k and time t0 adds
///   m exp(-(t - t0) / pulse_decay) [exp(-diffusivity L (t - t0) / 60) e_k]_i.
struct SynthSpec {
  std::size_t n_nodes = 8;
  Topology topology = Topology::ring;
  double days = 2.0;
  double interval_minutes = 5.0;
  double base_level = 60.0;
  double amplitude = 10.0;
  double coupling = 0.5;
  double freq_spread = 0.02;
  double diffusivity = 0.5;
  double noise_sigma = 0.5;
  double pulses_per_day = 4.0;
  double pulse_magnitude = 8.0;
  double pulse_decay = 60.0;
  double radius = 0.45;  // random_geometric connection radius in the unit square

  static SynthSpec parse(std::string_view text);
  static SynthSpec load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct SynthCity {
  graph::TrafficNetwork network;
  TrafficSeries series;
};

SynthCity synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace mcpst::data

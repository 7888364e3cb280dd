#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mcpst {

/// Every tunable of a run. Serialised as flat `key = value` lines with `#`
/// comments; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 42;

  // model
  std::size_t hidden = 16;
  std::size_t k_diff = 6;
  std::size_t k_sync = 10;
  double sync_dt = 0.1;
  std::size_t k_spectral = 8;
  std::size_t heads = 8;
  std::size_t layers = 2;
  std::size_t ffn_hidden = 0;  // 0 selects 4 * hidden
  double dropout = 0.1;
  std::size_t history = 12;
  std::size_t horizon = 12;
  bool augment_features = true;
  bool keep_directed = false;

  // optimisation
  double pretrain_lr = 3e-4;
  double finetune_lr = 1e-4;
  double weight_decay = 1e-4;
  double clip_tau = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t pretrain_epochs = 250;
  std::size_t finetune_epochs = 250;
  std::size_t patience = 20;
  double min_delta = 1e-5;
  std::size_t batch_size = 32;
  std::size_t window_stride = 1;

  // loss
  double lambda1 = 0.1;
  double lambda2 = 1.0;
  double eta = 0.01;
  double beta = 0.1;
  bool nll = false;

  // meta-learning
  std::size_t support_size = 12;
  std::size_t query_size = 16;
  double inner_lr = 5e-4;
  double outer_lr = 1e-4;
  std::size_t inner_steps = 5;
  std::size_t eval_inner_steps = 15;
  std::size_t meta_steps = 200;
  std::size_t meta_batch = 4;
  double adapt_days = 3.0;

  // data statistics recorded at training time
  double data_mean = 0.0;
  double data_std = 1.0;
  double data_interval_minutes = 5.0;
  double data_fvar_mean = 0.0;
  double data_fvar_std = 1.0;

  std::size_t ffn_width() const { return ffn_hidden ? ffn_hidden : 4 * hidden; }
  std::size_t input_channels() const { return augment_features ? 5 : 1; }

  /// Sets one key from its text form; throws std::invalid_argument for an
  /// unknown key or a malformed value.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// Range checks that do not depend on the data.
  void validate() const;

  std::string to_text() const;
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
};

/// Splits `key = value` lines; `#` starts a comment, blank lines are skipped.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

/// Seed from MCPST_SEED when set, otherwise `fallback`.
std::uint64_t seed_from_env(std::uint64_t fallback);

}  // namespace mcpst

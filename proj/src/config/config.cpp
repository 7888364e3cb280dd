#include "mcpst/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <variant>

namespace mcpst {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed is stored as a size field");
using Field = std::variant<std::size_t RunConfig::*, double RunConfig::*, bool RunConfig::*>;

const std::map<std::string, Field, std::less<>>& field_table() {
  static const std::map<std::string, Field, std::less<>> table = {
      {"seed", &RunConfig::seed},
      {"hidden", &RunConfig::hidden},
      {"k_diff", &RunConfig::k_diff},
      {"k_sync", &RunConfig::k_sync},
      {"sync_dt", &RunConfig::sync_dt},
      {"k_spectral", &RunConfig::k_spectral},
      {"heads", &RunConfig::heads},
      {"layers", &RunConfig::layers},
      {"ffn_hidden", &RunConfig::ffn_hidden},
      {"dropout", &RunConfig::dropout},
      {"history", &RunConfig::history},
      {"horizon", &RunConfig::horizon},
      {"augment_features", &RunConfig::augment_features},
      {"keep_directed", &RunConfig::keep_directed},
      {"pretrain_lr", &RunConfig::pretrain_lr},
      {"finetune_lr", &RunConfig::finetune_lr},
      {"weight_decay", &RunConfig::weight_decay},
      {"clip_tau", &RunConfig::clip_tau},
      {"adam_beta1", &RunConfig::adam_beta1},
      {"adam_beta2", &RunConfig::adam_beta2},
      {"adam_eps", &RunConfig::adam_eps},
      {"pretrain_epochs", &RunConfig::pretrain_epochs},
      {"finetune_epochs", &RunConfig::finetune_epochs},
      {"patience", &RunConfig::patience},
      {"min_delta", &RunConfig::min_delta},
      {"batch_size", &RunConfig::batch_size},
      {"window_stride", &RunConfig::window_stride},
      {"lambda1", &RunConfig::lambda1},
      {"lambda2", &RunConfig::lambda2},
      {"eta", &RunConfig::eta},
      {"beta", &RunConfig::beta},
      {"nll", &RunConfig::nll},
      {"support_size", &RunConfig::support_size},
      {"query_size", &RunConfig::query_size},
      {"inner_lr", &RunConfig::inner_lr},
      {"outer_lr", &RunConfig::outer_lr},
      {"inner_steps", &RunConfig::inner_steps},
      {"eval_inner_steps", &RunConfig::eval_inner_steps},
      {"meta_steps", &RunConfig::meta_steps},
      {"meta_batch", &RunConfig::meta_batch},
      {"adapt_days", &RunConfig::adapt_days},
      {"data.mean", &RunConfig::data_mean},
      {"data.std", &RunConfig::data_std},
      {"data.interval_minutes", &RunConfig::data_interval_minutes},
      {"data.fvar_mean", &RunConfig::data_fvar_mean},
      {"data.fvar_std", &RunConfig::data_fvar_std},
  };
  return table;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class U>
U parse_unsigned(std::string_view key, std::string_view v) {
  U out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw std::invalid_argument("config key '" + std::string(key) +
                                "' expects a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw std::invalid_argument("config key '" + std::string(key) + "' expects a number, got '" +
                                s + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + std::string(key) + "' expects true/false, got '" +
                              std::string(v) + "'");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& table = field_table();
  auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
  value = trim(value);
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, double>) {
          this->*member = parse_double(key, value);
        } else if constexpr (std::is_same_v<T, bool>) {
          this->*member = parse_bool(key, value);
        } else {
          this->*member = parse_unsigned<T>(key, value);
        }
      },
      it->second);
}

std::string RunConfig::get(std::string_view key) const {
  const auto& table = field_table();
  auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_double(this->*member);
        } else if constexpr (std::is_same_v<T, bool>) {
          return (this->*member) ? "true" : "false";
        } else {
          return std::to_string(this->*member);
        }
      },
      it->second);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : field_table()) out.push_back(k);
    return out;
  }();
  return names;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(hidden >= 4 && hidden % 4 == 0, "hidden must be a positive multiple of 4");
  require(k_diff >= 1, "k_diff must be >= 1");
  require(k_sync >= 1, "k_sync must be >= 1");
  require(sync_dt > 0.0, "sync_dt must be positive");
  require(k_spectral >= 1, "k_spectral must be >= 1");
  require(heads >= 1, "heads must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(history >= 1 && horizon >= 1, "history and horizon must be >= 1");
  require(pretrain_lr > 0 && finetune_lr > 0 && inner_lr > 0 && outer_lr > 0,
          "learning rates must be positive");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(clip_tau > 0.0, "clip_tau must be positive");
  require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
          "adam betas must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(min_delta >= 0.0, "min_delta must be >= 0");
  require(batch_size >= 1 && window_stride >= 1, "batch_size and window_stride must be >= 1");
  require(lambda1 >= 0 && lambda2 >= 0 && eta >= 0 && beta >= 0, "loss weights must be >= 0");
  require(support_size >= 1 && query_size >= 1, "support/query sizes must be >= 1");
  require(meta_batch >= 1, "meta_batch must be >= 1");
  require(adapt_days > 0.0, "adapt_days must be positive");
  require(data_std > 0.0 && data_fvar_std > 0.0, "recorded standard deviations must be positive");
  require(data_interval_minutes > 0.0, "data.interval_minutes must be positive");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& key : keys()) os << key << " = " << get(key) << '\n';
  return os.str();
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  for (const auto& [key, value] : parse_key_values(text)) cfg.set(key, value);
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("MCPST_SEED");
  if (!env || !*env) return fallback;
  return parse_unsigned<std::uint64_t>("MCPST_SEED", env);
}

}  // namespace mcpst

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mcpst/tensor.hpp"

namespace mcpst {

/// On-disk model container:
///   "MCPS" | u32 version | u32 config length | config bytes |
///   { u32 name length | name | u32 rank | u64 dims[rank] | f64 payload }*
/// All integers and floats little-endian.
struct ModelFile {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> records;

  const Tensor* find(const std::string& name) const;
};

std::string encode_model(const ModelFile& file);
ModelFile decode_model(const std::string& bytes);

void write_model_file(const std::filesystem::path& path, const ModelFile& file);
ModelFile read_model_file(const std::filesystem::path& path);

}  // namespace mcpst

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hbrep/nn.hpp"

namespace hbrep::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// One named array of a checkpoint container.
struct CheckpointRecord {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

/// Container layout: 8-byte magic "HBRPCKPT", u32 version, u32 record count,
/// then per record: u32 name length, name bytes, u32 rank, rank x u32 dims,
/// little-endian f32 payload. All integers little-endian.
void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

/// Prefix of the one-element records holding scalar hyperparameters.
inline constexpr const char* kConfigPrefix = "__config__.";

using ConfigValues = std::map<std::string, double>;

/// Saves parameters followed by one record per config key.
void save_module(const std::filesystem::path& path, const ParamList& params, const ConfigValues& config);
ConfigValues read_module_config(const std::filesystem::path& path);
/// Copies stored values into matching parameters; throws ParseError on a
/// missing name or shape mismatch.
void load_module(const std::filesystem::path& path, const ParamList& params);

}  // namespace hbrep::nn

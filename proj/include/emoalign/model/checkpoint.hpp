#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emoalign/numerics/param_store.hpp"
#include "json.hpp"

namespace emoalign::model {

/// On-disk element type. Values are always held in memory as double.
enum class StorageType : std::uint8_t { kFloat64 = 0, kFloat32 = 1 };

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  numerics::ParameterStore params;
};

/// Layout: "EMOALIGN", u32 version, u32 + metadata JSON, u32 record count,
/// then per record u32 + name, u8 dtype, u32 rank, u64 dims, raw data.
/// All integers and values are little-endian.
std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt, StorageType storage = StorageType::kFloat64);
Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes);

/// Writes atomically through a temporary file in the same directory.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                     StorageType storage = StorageType::kFloat64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Whole-file helpers shared by the artifact writers.
std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace emoalign::model

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "medgan/tensor.hpp"

namespace medgan {

// Named float32 tensors plus a JSON metadata record.
//
// On-disk layout (.mgck), all integers little-endian:
//   "MGCK" | u32 version | u64 meta_len | meta JSON | u32 count |
//   count x ( u32 name_len | name | u32 rank | u64 dims[rank] | f32 data[] ) |
//   32-byte SHA-256 of everything before it
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, Tensor<float>> tensors;

  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  // Throws IncompatibilityError when missing.
  const Tensor<float>& tensor(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws CorruptionError on digest mismatch or truncation; never returns partial state.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::byte>& bytes);

// Copies parameter values into the archive under their names (converted to float).
template <typename T>
void store_parameters(Checkpoint& ckpt, const std::vector<const Parameter<T>*>& params, const std::string& prefix = "");

// Copies archived values into parameters; a missing name or a shape mismatch
// raises IncompatibilityError naming the tensor.
template <typename T>
void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter<T>*>& params, const std::string& prefix = "");

}  // namespace medgan

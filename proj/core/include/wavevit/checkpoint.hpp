#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wavevit/backbone.hpp"
#include "wavevit/tensor_io.hpp"

namespace wavevit {

// WVCK: "WVCK" | u32 version (1) | u64 tensor count | per tensor:
//   u32 name length | UTF-8 name | u8 dtype | u8 rank (4) | 4 x u64 dims | payload
// Integers and payload little-endian.

inline constexpr std::uint32_t kWvckVersion = 1;

struct CheckpointEntry {
  std::string name;
  AnyTensor tensor;
};

/// Ordered named tensors.
using Checkpoint = std::vector<CheckpointEntry>;

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint to_checkpoint(const Model<T>& model);

/// Copies tensors into the model's parameters by name. Every parameter must
/// be present with a matching shape; stored dtype is converted to T.
template <typename T>
void load_into(Model<T>& model, const Checkpoint& ckpt);

}  // namespace wavevit

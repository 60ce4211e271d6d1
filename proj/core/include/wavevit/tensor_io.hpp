#pragma once

#include <filesystem>
#include <iosfwd>
#include <variant>

#include "wavevit/tensor.hpp"

namespace wavevit {

// WT4D: "WT4D" | u32 version (1) | u8 dtype (0 = binary64, 1 = binary32) |
// u8 rank (4) | 4 x u64 dims | raw payload. All integers little-endian.

inline constexpr std::uint32_t kWt4dVersion = 1;

using AnyTensor = std::variant<Tensor4<double>, Tensor4<float>>;

template <typename T>
void write_wt4d(std::ostream& os, const Tensor4<T>& t);
AnyTensor read_wt4d(std::istream& is);

template <typename T>
void save_wt4d(const std::filesystem::path& path, const Tensor4<T>& t);
AnyTensor load_wt4d(const std::filesystem::path& path);

/// Loads and converts to T if the stored dtype differs.
template <typename T>
Tensor4<T> load_wt4d_as(const std::filesystem::path& path);

DType dtype_of(const AnyTensor& t);

}  // namespace wavevit

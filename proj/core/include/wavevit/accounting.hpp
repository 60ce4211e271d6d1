#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wavevit/backbone.hpp"

namespace wavevit {

struct MacEntry {
  std::string layer;
  std::uint64_t macs = 0;
};

/// Per-image analytic multiply-accumulate counts.
///   matmul: rows · d_in · d_out; conv: positions · k² · c_in · c_out;
///   attention scores and weighted sums: n · m · D each.
/// Norms, activations, softmax, pooling and DWT/IDWT are not counted.
struct MacReport {
  std::vector<MacEntry> entries;
  std::uint64_t attention_scores = 0;  // Q·Kᵀ products summed over blocks

  std::uint64_t total() const;
  /// 2 · MACs / 1e9 (one multiply + one add).
  double gflops_two_per_mac() const { return 2.0 * static_cast<double>(total()) / 1e9; }
  /// MACs / 1e9, the convention that calls one MAC one FLOP.
  double gflops_one_per_mac() const { return static_cast<double>(total()) / 1e9; }
};

/// Square input of `resolution` pixels (defaults to spec.input_resolution).
MacReport count_macs(const ModelSpec& spec, std::size_t resolution = 0);

template <typename T>
MacReport count_macs(const Model<T>& model, std::size_t resolution = 0) {
  return count_macs(model.spec(), resolution);
}

}  // namespace wavevit

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wavevit/autograd.hpp"

namespace wavevit {

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-5;
  /// Inputs with more elements than this are probed on a random subset.
  std::size_t max_coords_per_input = 512;
  std::uint64_t subset_seed = 0x5eed;
};

struct GradCheckReport {
  /// Largest per-input relative error ‖a - n‖ / max(‖a‖, ‖n‖, 1e-8) over the
  /// probed coordinates; this is the pass criterion.
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::vector<double> input_rel_errors;
  /// Diagnostics: worst single coordinate, |a - n| / max(|a|, |n|, 1e-8).
  double max_elementwise_rel_error = 0.0;
  std::size_t worst_element_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
  bool subsampled = false;
  std::size_t subset_size = 0;  // per subsampled input
  std::uint64_t subset_seed = 0;
  bool passed = false;

  std::string summary() const;
};

using ScalarFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences, coordinate by coordinate. Each input is scored by the
/// norm-wise relative error of its probed gradient entries, so isolated
/// near-zero components cannot fail on finite-difference round-off alone.
/// Inputs must be leaves with requires_grad set; their gradients are reset.
GradCheckReport grad_check(const ScalarFn& fn, std::vector<Var<double>> inputs,
                           const GradCheckOptions& options = {});

}  // namespace wavevit

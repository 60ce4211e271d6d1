#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wavevit/grad_check.hpp"

namespace wavevit::cli {

/// One finite-difference scenario: a scalar function and its leaf inputs.
struct GradCase {
  std::string name;
  ScalarFn fn;
  std::vector<Var<double>> inputs;
};

/// Every differentiable op plus the attention variants and backbone pieces,
/// built with random shapes and values drawn from `seed`. Scalar losses are
/// random weighted sums so that no gradient is trivially constant.
std::vector<GradCase> grad_cases(std::uint64_t seed);

/// Names returned by grad_cases, in order.
std::vector<std::string> grad_case_names();

}  // namespace wavevit::cli

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace wavevit::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Suites: "tensor", "wavelet", "attention", "backbone". Throws
/// std::invalid_argument for unknown names.
std::vector<CheckResult> run_suite(std::string_view suite, std::uint64_t seed);

const std::vector<std::string>& suite_names();

/// One "PASS|FAIL suite.name detail" line per result; returns failures.
std::size_t print_results(std::ostream& os, std::string_view suite, const std::vector<CheckResult>& results);

}  // namespace wavevit::cli

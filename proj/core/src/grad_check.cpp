#include "wavevit/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "wavevit/random.hpp"

namespace wavevit {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "max_rel_error=" << max_rel_error << " (input " << worst_input << ") elementwise="
     << max_elementwise_rel_error << " at (input " << worst_element_input << ", index " << worst_index
     << ", analytic " << worst_analytic << ", numeric " << worst_numeric << ") coords=" << coords_checked;
  if (subsampled) os << " subset=" << subset_size << " seed=" << subset_seed;
  os << (passed ? " PASS" : " FAIL");
  return os.str();
}

GradCheckReport grad_check(const ScalarFn& fn, std::vector<Var<double>> inputs,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("grad_check: step must be > 0");
  for (const auto& in : inputs) {
    if (!in.defined() || !in.requires_grad() || !in.node()->is_leaf()) {
      throw ConfigError("grad_check: every input must be a leaf with requires_grad");
    }
  }
  for (auto& in : inputs) in.zero_grad();
  {
    const Var<double> loss = fn(inputs);
    backward(loss);
  }
  std::vector<Tensor4<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& in : inputs) analytic.push_back(in.grad());

  GradCheckReport report;
  report.subset_seed = options.subset_seed;
  Rng rng(options.subset_seed);
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor4<double>& value = inputs[i].mutable_value();
    std::vector<std::size_t> coords(value.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.max_coords_per_input) {
      // Partial Fisher-Yates; deterministic under subset_seed.
      for (std::size_t j = 0; j < options.max_coords_per_input; ++j) {
        std::swap(coords[j], coords[j + rng.below(coords.size() - j)]);
      }
      coords.resize(options.max_coords_per_input);
      report.subsampled = true;
      report.subset_size = options.max_coords_per_input;
    }
    double diff_sq = 0.0, analytic_sq = 0.0, numeric_sq = 0.0;
    for (std::size_t idx : coords) {
      const double saved = value[idx];
      value[idx] = saved + options.step;
      const double up = fn(inputs).value()[0];
      value[idx] = saved - options.step;
      const double down = fn(inputs).value()[0];
      value[idx] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[i][idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      diff_sq += (a - numeric) * (a - numeric);
      analytic_sq += a * a;
      numeric_sq += numeric * numeric;
      ++report.coords_checked;
      if (report.coords_checked == 1 || rel > report.max_elementwise_rel_error) {
        report.max_elementwise_rel_error = rel;
        report.worst_element_input = i;
        report.worst_index = idx;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
    const double norm_rel = std::sqrt(diff_sq) / std::max({std::sqrt(analytic_sq), std::sqrt(numeric_sq), 1e-8});
    report.input_rel_errors.push_back(norm_rel);
    if (i == 0 || norm_rel > report.max_rel_error) {
      report.max_rel_error = norm_rel;
      report.worst_input = i;
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace wavevit

#include "wavevit/accounting.hpp"

namespace wavevit {

std::uint64_t MacReport::total() const {
  std::uint64_t t = 0;
  for (const auto& e : entries) t += e.macs;
  return t;
}

MacReport count_macs(const ModelSpec& spec, std::size_t resolution) {
  validate(spec);
  const std::size_t res = resolution == 0 ? spec.input_resolution : resolution;
  if (res % 32 != 0) throw ConfigError("count_macs: resolution " + std::to_string(res) + " not divisible by 32");
  MacReport report;
  const auto grids = stage_resolutions(res);
  std::uint64_t c_in = 3;
  for (std::size_t i = 0; i < ModelSpec::kStages; ++i) {
    const StageSpec& st = spec.stages[i];
    const std::string prefix = "stage" + std::to_string(i + 1);
    const std::uint64_t g = grids[i], n = g * g, c = st.channels;
    const std::uint64_t k = ModelSpec::kStrides[i] == 4 ? 7 : 3;
    report.entries.push_back({prefix + ".embed", n * k * k * c_in * c});
    const AttentionMacs attn = attention_macs(st.mode, g, g, c);
    const std::uint64_t ffn = 2 * n * c * (st.ffn_expansion * c);
    for (std::size_t j = 0; j < st.depth; ++j) {
      const std::string bl = prefix + ".block" + std::to_string(j);
      report.entries.push_back({bl + ".attn", attn.total()});
      report.entries.push_back({bl + ".ffn", ffn});
      report.attention_scores += attn.scores;
    }
    c_in = c;
  }
  report.entries.push_back({"head", c_in * spec.num_classes});
  return report;
}

}  // namespace wavevit

#include <benchmark/benchmark.h>

#include "wavevit/attention.hpp"
#include "wavevit/backbone.hpp"
#include "wavevit/harness.hpp"
#include "wavevit/ops.hpp"
#include "wavevit/wavelet.hpp"

namespace {

using namespace wavevit;

// Args: mode index, grid edge, channels.
void BM_AttentionForward(benchmark::State& state) {
  const auto mode = static_cast<DownsampleMode>(state.range(0));
  const auto grid = static_cast<std::size_t>(state.range(1));
  const auto dim = static_cast<std::size_t>(state.range(2));
  Rng rng(0);
  const auto params = make_attention_params<float>(dim, dim / 32, mode, rng);
  const Var<float> x(random_uniform<float>({1, dim, grid, grid}, rng));
  NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(attention_forward(x, params).value().data().data());
  }
  const AttentionMacs macs = attention_macs(mode, grid, grid, dim);
  state.SetLabel(std::string(mode_name(mode)));
  state.counters["MACs"] = benchmark::Counter(static_cast<double>(macs.total()), benchmark::Counter::kIsIterationInvariantRate);
  state.counters["score_MACs"] = static_cast<double>(macs.scores);
}

void attention_args(benchmark::internal::Benchmark* b) {
  for (int mode = 0; mode < 5; ++mode) {
    b->Args({mode, 56, 64});
    b->Args({mode, 28, 128});
  }
}

BENCHMARK(BM_AttentionForward)->Apply(attention_args)->Unit(benchmark::kMillisecond);

void BM_AttentionBackward(benchmark::State& state) {
  const auto mode = static_cast<DownsampleMode>(state.range(0));
  Rng rng(1);
  const auto params = make_attention_params<float>(64, 2, mode, rng);
  const Tensor4<float> x = random_uniform<float>({1, 64, 28, 28}, rng);
  for (auto _ : state) {
    const Var<float> in(x, true);
    backward(sum(attention_forward(in, params)));
    benchmark::DoNotOptimize(in.grad().data().data());
  }
  state.SetLabel(std::string(mode_name(mode)));
}

BENCHMARK(BM_AttentionBackward)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

void BM_Dwt(benchmark::State& state) {
  Rng rng(2);
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor4<double> x = random_uniform<double>({1, 16, side, side}, rng);
  for (auto _ : state) {
    const Subbands<Tensor4<double>> s = dwt2d_haar(x);
    benchmark::DoNotOptimize(idwt2d_haar(s).data().data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * x.numel() * sizeof(double)));
}

BENCHMARK(BM_Dwt)->Arg(32)->Arg(112);

void BM_MicroForward(benchmark::State& state) {
  const auto model = build_model<float>(preset("micro"), 0);
  const SyntheticDataset data = gen_dataset(0, 32);
  std::vector<std::size_t> idx(32);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Tensor4<float> images = batch_images<float>(data, idx);
  for (auto _ : state) benchmark::DoNotOptimize(model.logits(images).data().data());
  state.SetItemsProcessed(state.iterations() * 32);
}

BENCHMARK(BM_MicroForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "spikefuse/config.hpp"
#include "spikefuse/model.hpp"
#include "spikefuse/ops.hpp"
#include "spikefuse/spectral.hpp"
#include "spikefuse/sse.hpp"

using namespace spikefuse;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double spike_p = -1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution b(spike_p < 0.0 ? 0.5 : spike_p);
  std::vector<double> v(shape_volume(shape));
  for (auto& x : v) x = spike_p < 0.0 ? u(rng) : (b(rng) ? 1.0 : 0.0);
  return Tensor::from(std::move(shape), std::move(v));
}

void BM_Linear(benchmark::State& state) {
  Rng rng(1);
  const auto d = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({256, d}, rng), w = random_tensor({d, d}, rng);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(linear(x, w));
  state.SetItemsProcessed(state.iterations() * 2 * 256 * static_cast<std::int64_t>(d * d));
}
BENCHMARK(BM_Linear)->Arg(32)->Arg(128)->Arg(256);

void BM_Dft(benchmark::State& state, DftAlgorithm algo) {
  Rng rng(2);
  Tensor x = random_tensor({64, static_cast<std::size_t>(state.range(0))}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dft(x, algo));
}
BENCHMARK_CAPTURE(BM_Dft, naive, DftAlgorithm::kNaive)->Arg(16)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_Dft, radix2, DftAlgorithm::kRadix2)->Arg(16)->Arg(64)->Arg(256);

void BM_Hypergraph(benchmark::State& state) {
  Rng rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({n, 64}, rng, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(build_hypergraph(x.values(), n, 64, 5));
}
BENCHMARK(BM_Hypergraph)->Arg(25)->Arg(48)->Arg(200);

void BM_ToyForward(benchmark::State& state) {
  RunConfig cfg = toy_preset();
  Rng rng(4);
  SpikeFuseNet net(cfg.model, rng);
  const auto& sk = cfg.model.skeleton;
  const auto& ev = cfg.model.event;
  Batch b{random_tensor({8, sk.window, sk.in_channels, sk.joints}, rng),
          random_tensor({8, ev.window, 2, ev.height, ev.width}, rng, 0.1),
          {0, 1, 2, 3, 0, 1, 2, 3}};
  NoGradGuard ng;
  ForwardContext ctx;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(b, ctx));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_ToyForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

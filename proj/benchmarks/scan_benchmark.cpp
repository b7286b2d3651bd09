// Sequential vs chunked selective scan over sequence length, chunk size and thread count.
#include <map>

#include <benchmark/benchmark.h>

#include "msfmamba/scan_bench.hpp"
#include "msfmamba/ssm.hpp"

using namespace msf;

namespace {

constexpr std::size_t kChannels = 8;
constexpr std::size_t kStates = 16;

const ScanInstance<float>& instance(std::size_t P) {
  static std::map<std::size_t, ScanInstance<float>> cache;
  auto it = cache.find(P);
  if (it == cache.end()) {
    Rng rng(P);
    it = cache.emplace(P, random_scan_instance(P, kChannels, kStates, rng).cast<float>()).first;
  }
  return it->second;
}

void sequential(benchmark::State& state) {
  const auto& s = instance(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scan_sequential(s.a_bar, s.b_bar, s.c_mat, s.D, s.x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void chunked(benchmark::State& state) {
  const auto& s = instance(static_cast<std::size_t>(state.range(0)));
  const auto chunk = static_cast<std::size_t>(state.range(1));
  const auto threads = static_cast<std::size_t>(state.range(2));
  for (auto _ : state) benchmark::DoNotOptimize(scan_chunked(s.a_bar, s.b_bar, s.c_mat, s.D, s.x, chunk, threads));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(sequential)->RangeMultiplier(4)->Range(256, 16384);
BENCHMARK(chunked)->ArgsProduct({{1024, 4096, 16384}, {32, 128, 512}, {1, 4}})->UseRealTime();

BENCHMARK_MAIN();

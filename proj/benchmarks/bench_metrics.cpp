// Microbenchmarks for numeric kernels outside retrieval: false-accept
// threshold selection over large impostor score sets, seed-interval
// estimation, FIR filter design, and multi-lead rate halving.

#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ecgid/metrics.hpp"
#include "ecgid/outcome.hpp"
#include "ecgid/resample.hpp"

namespace {

ecgid::ScoreTail impostor_tail(std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.2);
  ecgid::ScoreTail tail;
  for (std::size_t i = 0; i < m; ++i) tail.add(dist(rng));
  return tail;
}

void BM_FarThreshold(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto tail = impostor_tail(m, 3);
  for (auto _ : state) {
    double t = ecgid::far_threshold(tail, 1e-3);
    benchmark::DoNotOptimize(t);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m));
}
BENCHMARK(BM_FarThreshold)->Arg(100000)->Arg(1000000);

void BM_TarAtFar(benchmark::State& state) {
  const auto tail = impostor_tail(100000, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> genuine_dist(0.8, 0.1);
  std::vector<double> genuine(10000);
  for (auto& g : genuine) g = genuine_dist(rng);
  for (auto _ : state) {
    auto r = ecgid::tar_at_far(genuine, tail, 1e-3);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_TarAtFar);

void BM_TInterval(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> values(20);
  for (auto& v : values) v = dist(rng);
  for (auto _ : state) {
    auto iv = ecgid::t_interval(values);
    benchmark::DoNotOptimize(iv);
  }
}
BENCHMARK(BM_TInterval);

void BM_DesignFir(benchmark::State& state) {
  const auto spec = ecgid::antialias_spec(500.0);
  for (auto _ : state) {
    auto taps = ecgid::design_fir(spec, 1000.0);
    benchmark::DoNotOptimize(taps);
  }
}
BENCHMARK(BM_DesignFir);

void BM_ResampleHalve(benchmark::State& state) {
  const auto seconds = static_cast<std::size_t>(state.range(0));
  ecgid::MultiLeadSignal in;
  in.sample_rate = 1000.0;
  in.channels.resize(8, static_cast<Eigen::Index>(seconds * 1000));
  for (Eigen::Index c = 0; c < in.channels.rows(); ++c)
    for (Eigen::Index t = 0; t < in.channels.cols(); ++t)
      in.channels(c, t) =
          std::sin(2.0 * M_PI * (5.0 + static_cast<double>(c)) *
                   static_cast<double>(t) / 1000.0);
  for (auto _ : state) {
    auto out = ecgid::resample(in, 500.0);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(8 * seconds * 1000));
}
BENCHMARK(BM_ResampleHalve)->Arg(10)->Arg(60);

}  // namespace

BENCHMARK_MAIN();

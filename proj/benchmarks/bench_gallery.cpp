// Microbenchmarks for gallery construction and exact top-K cosine retrieval.
//
// Retrieval cost scales with gallery size x dimension; the shortlist size K
// only affects the final selection step. Items processed counts candidate
// vectors scanned per second.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "ecgid/gallery.hpp"
#include "ecgid/synth.hpp"

namespace {

ecgid::SynthOutput make_pool(std::size_t n, Eigen::Index dim) {
  ecgid::SynthConfig sc;
  sc.n_subjects = n;
  sc.exams_min = 1;
  sc.exams_max = 1;
  sc.dim = dim;
  sc.intra_noise = 0.1;
  sc.seed = 7;
  return ecgid::generate(sc);
}

void BM_GalleryBuild(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto dim = static_cast<Eigen::Index>(state.range(1));
  const auto master = make_pool(n, dim).records;
  for (auto _ : state) {
    auto records = master;  // construction consumes its input
    ecgid::Gallery g(std::move(records));
    benchmark::DoNotOptimize(g);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_GalleryBuild)->Args({1000, 64})->Args({8000, 64})->Args({8000, 256});

void BM_GalleryTopK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto dim = static_cast<Eigen::Index>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  ecgid::Gallery gallery(make_pool(n, dim).records);
  std::vector<ecgid::Vector> queries;
  for (std::size_t i = 0; i < 64; ++i)
    queries.push_back(gallery.matrix().col(static_cast<Eigen::Index>(i)));
  std::size_t qi = 0;
  for (auto _ : state) {
    auto shortlist =
        gallery.top_k(queries[qi], gallery.record(qi).exam_id, k, qi);
    benchmark::DoNotOptimize(shortlist);
    qi = (qi + 1) % queries.size();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_GalleryTopK)
    ->Args({2000, 64, 50})
    ->Args({8000, 64, 50})
    ->Args({32000, 64, 50})
    ->Args({8000, 256, 50})
    ->Args({8000, 64, 10})
    ->Args({8000, 64, 200});

}  // namespace

BENCHMARK_MAIN();

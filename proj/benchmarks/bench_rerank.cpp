// Microbenchmarks for shortlist rescoring: cohort statistics, affine score
// normalization, adaptive symmetric normalization, graph diffusion, and
// query expansion.
//
// Setup uses a 2,000-identity single-exam gallery (dim 64), K=100
// shortlists, and a 400-member internal impostor cohort. Per-candidate and
// k-NN graph precomputations are benchmarked separately from the per-query
// rescoring they amortize.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "ecgid/gallery.hpp"
#include "ecgid/rerank.hpp"
#include "ecgid/synth.hpp"

namespace {

constexpr std::size_t kGallerySize = 2000;
constexpr std::size_t kCohortSize = 400;
constexpr std::size_t kShortlistK = 100;

struct Fixture {
  ecgid::Gallery gallery;
  ecgid::Cohort cohort;
  std::vector<ecgid::Vector> queries;
  std::vector<ecgid::Shortlist> shortlists;

  Fixture() {
    ecgid::SynthConfig sc;
    sc.n_subjects = kGallerySize;
    sc.exams_min = 1;
    sc.exams_max = 1;
    sc.dim = 64;
    sc.intra_noise = 0.1;
    sc.seed = 11;
    gallery = ecgid::Gallery(ecgid::generate(sc).records);
    cohort = ecgid::make_internal_cohort(gallery, kCohortSize, 1);
    for (std::size_t i = 0; i < 32; ++i) {
      queries.push_back(gallery.matrix().col(static_cast<Eigen::Index>(i)));
      shortlists.push_back(gallery.top_k(queries.back(),
                                         gallery.record(i).exam_id,
                                         kShortlistK, i));
    }
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_SideStats(benchmark::State& state) {
  const auto& f = fixture();
  std::size_t qi = 0;
  for (auto _ : state) {
    auto stats = ecgid::side_stats(f.queries[qi], f.cohort);
    benchmark::DoNotOptimize(stats);
    qi = (qi + 1) % f.queries.size();
  }
}
BENCHMARK(BM_SideStats);

void BM_CandidateSideStats(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    auto stats = ecgid::candidate_side_stats(f.gallery, f.cohort);
    benchmark::DoNotOptimize(stats);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(f.gallery.size()));
}
BENCHMARK(BM_CandidateSideStats);

void BM_NormalizeQuerySide(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<ecgid::NormStats> qstats;
  for (const auto& q : f.queries) qstats.push_back(ecgid::side_stats(q, f.cohort));
  std::size_t qi = 0;
  for (auto _ : state) {
    auto rescored = ecgid::normalize_scores(
        f.shortlists[qi], ecgid::RerankMethod::znorm, qstats[qi], {});
    benchmark::DoNotOptimize(rescored);
    qi = (qi + 1) % f.queries.size();
  }
}
BENCHMARK(BM_NormalizeQuerySide);

void BM_NormalizeSymmetric(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<ecgid::NormStats> qstats;
  for (const auto& q : f.queries) qstats.push_back(ecgid::side_stats(q, f.cohort));
  const auto cstats = ecgid::candidate_side_stats(f.gallery, f.cohort);
  std::size_t qi = 0;
  for (auto _ : state) {
    auto rescored = ecgid::normalize_scores(
        f.shortlists[qi], ecgid::RerankMethod::snorm, qstats[qi], cstats);
    benchmark::DoNotOptimize(rescored);
    qi = (qi + 1) % f.queries.size();
  }
}
BENCHMARK(BM_NormalizeSymmetric);

void BM_AdaptiveStats(benchmark::State& state) {
  const auto& f = fixture();
  std::size_t qi = 0;
  for (auto _ : state) {
    auto stats = ecgid::adaptive_stats(
        f.queries[qi], f.gallery.record(qi).subject_id, f.cohort, 50, 200);
    benchmark::DoNotOptimize(stats);
    qi = (qi + 1) % f.queries.size();
  }
}
BENCHMARK(BM_AdaptiveStats);

void BM_AsNormCached(benchmark::State& state) {
  const auto& f = fixture();
  auto spec = ecgid::RerankSpec::parse(ecgid::RerankMethod::asnorm,
                                       "K100_N50_scan200");
  const auto cache =
      ecgid::adaptive_candidate_stats(f.gallery, f.cohort, 50, 200);
  std::size_t qi = 0;
  for (auto _ : state) {
    auto rescored =
        ecgid::as_norm(f.shortlists[qi], f.queries[qi],
                       f.gallery.record(qi).subject_id, f.gallery, f.cohort,
                       spec, &cache);
    benchmark::DoNotOptimize(rescored);
    qi = (qi + 1) % f.queries.size();
  }
}
BENCHMARK(BM_AsNormCached);

void BM_KnnGraphBuild(benchmark::State& state) {
  const auto& f = fixture();
  const auto local_k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto graph = ecgid::build_knn_graph(f.gallery, local_k);
    benchmark::DoNotOptimize(graph);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(f.gallery.size()));
}
BENCHMARK(BM_KnnGraphBuild)->Arg(5)->Arg(20);

void BM_DiffuseOne(benchmark::State& state) {
  const auto& f = fixture();
  const int iterations = static_cast<int>(state.range(0));
  const auto graph = ecgid::build_knn_graph(f.gallery, 10);
  std::size_t qi = 0;
  for (auto _ : state) {
    auto rescored = ecgid::diffuse_one(f.shortlists[qi], graph,
                                       f.gallery.size(), 0.9, iterations);
    benchmark::DoNotOptimize(rescored);
    qi = (qi + 1) % f.shortlists.size();
  }
}
BENCHMARK(BM_DiffuseOne)->Arg(3)->Arg(20);

void BM_AlphaQE(benchmark::State& state) {
  const auto& f = fixture();
  std::size_t qi = 0;
  for (auto _ : state) {
    auto rescored =
        ecgid::alpha_qe(f.queries[qi], f.gallery.record(qi).exam_id,
                        f.shortlists[qi], f.gallery, 10, 3.0, 0, qi);
    benchmark::DoNotOptimize(rescored);
    qi = (qi + 1) % f.queries.size();
  }
}
BENCHMARK(BM_AlphaQE);

void BM_BestOfK(benchmark::State& state) {
  const auto& f = fixture();
  std::size_t qi = 0;
  for (auto _ : state) {
    auto identities = ecgid::best_of_k(f.shortlists[qi]);
    benchmark::DoNotOptimize(identities);
    qi = (qi + 1) % f.shortlists.size();
  }
}
BENCHMARK(BM_BestOfK);

}  // namespace

BENCHMARK_MAIN();

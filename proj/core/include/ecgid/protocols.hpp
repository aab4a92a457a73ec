#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ecgid/gallery.hpp"
#include "ecgid/metrics.hpp"
#include "ecgid/outcome.hpp"
#include "ecgid/rerank.hpp"

namespace ecgid {

/// Leave-one-out closed-set identification over the whole gallery: every exam
/// queries all remaining exams. Per query: rank of the first same-subject
/// candidate (absent when the subject has no other exam), the top-two scores,
/// and the top candidate's subject. All same-subject scores feed the genuine
/// pool; every other comparison feeds the impostor pool, whose retention
/// capacity is sized from `fars` so downstream thresholds stay exact.
/// Deterministic for any thread count.
OutcomeSet run_gc(const Gallery& gallery, const std::vector<double>& fars,
                  int threads = 1);

struct ScaleConfig {
  std::vector<std::size_t> gallery_sizes;       ///< subject-count grid (G)
  std::vector<std::size_t> exams_per_subject;   ///< exam-count grid (E)
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint32_t> rank_ks{1, 5, 10};
  std::vector<double> fars{1e-3, 1e-4};
  int threads = 1;
  bool keep_outcomes = false;  ///< retain per-seed outcome sets (dump support)
};

/// One (G, E) grid cell with its per-seed metric bundles, seeds aligned by
/// index with ScaleConfig::seeds.
struct ScaleCell {
  std::size_t gallery_size = 0;
  std::size_t exams_per_subject = 0;
  std::vector<MetricBundle> per_seed;
  std::vector<OutcomeSet> per_seed_outcomes;  ///< filled when keep_outcomes
};

struct ScaleResult {
  std::vector<ScaleCell> cells;  // row-major: G outer, E inner
};

/// For every (G, E, seed): draws G subjects having at least E exams with a
/// generator derived from (seed, G, E), keeps each subject's earliest E
/// exams, and runs the leave-one-out protocol on that gallery. Cells are
/// validated up front; an infeasible cell raises InsufficientSubjects before
/// any work runs.
ScaleResult run_scale(const std::vector<EmbeddingRecord>& pool,
                      const ScaleConfig& config);

/// Per-seed values of one metric across a cell, for interval estimation.
std::vector<double> seed_rank_values(const ScaleCell& cell, std::uint32_t k);
std::vector<double> seed_tar_values(const ScaleCell& cell, double far);

/// One subject's temporal pair, embeddings resolved: the earlier and later
/// exam of the selected gap.
struct TstPair {
  std::string subject_id;
  EmbeddingRecord early;
  EmbeddingRecord late;
};

/// Which exams of the other subjects a query is compared against.
enum class TstImpostorScope {
  both_exams,        ///< both paired exams of every other subject
  later_exams_only,  ///< only the later exam of every other subject
};

struct TstConfig {
  TstImpostorScope scope = TstImpostorScope::both_exams;
  std::vector<std::uint32_t> rank_ks{1, 5, 10};
  std::vector<double> fars{1e-3, 1e-4};
  int threads = 1;
};

struct TstTargetResult {
  int target_years = 0;
  OutcomeSet outcomes;
  MetricBundle metrics;
};

/// Constant-gallery temporal stress test: for each target, every paired exam
/// queries its own mate plus the other subjects' exams under `scope`. All
/// targets must hold the same number of pairs (ConfigError otherwise), each
/// pair's exams must be date-ordered, and subjects must be unique per target.
std::vector<TstTargetResult> run_tst(
    const std::map<int, std::vector<TstPair>>& pairs_by_target,
    const TstConfig& config);

struct RrConfig {
  std::vector<std::uint32_t> rank_ks{1, 5, 10};
  std::vector<double> fars{1e-3, 1e-4};
  SideConvention convention = SideConvention::znorm_query_side;
  int threads = 1;
};

/// Fixed-gallery reranking evaluation: the full-depth leave-one-out baseline
/// plus the same queries rescored through one reranking method on top-K
/// shortlists.
struct RrResult {
  OutcomeSet baseline;
  OutcomeSet reranked;
  MetricBundle baseline_metrics;
  MetricBundle reranked_metrics;
};

/// Runs baseline retrieval and the reranker described by `spec` over every
/// query's top-K shortlist. Methods with an external cohort require
/// `external_cohort_pool`; reranked outcome pools are built from shortlist
/// comparisons (the only scores a shortlist method defines). A genuine mate
/// that exists in the gallery but misses the shortlist is recorded with rank
/// shortlist-length + 1 so it counts as a miss, not as mate-free.
RrResult run_rr(const Gallery& gallery, const RerankSpec& spec,
                const RrConfig& config,
                const std::vector<EmbeddingRecord>* external_cohort_pool =
                    nullptr);

}  // namespace ecgid

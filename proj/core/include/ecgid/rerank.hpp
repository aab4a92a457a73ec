#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecgid/gallery.hpp"

namespace ecgid {

enum class RerankMethod {
  bestofk,
  znorm,
  tnorm,
  snorm,
  asnorm,
  cnorm,
  diffusion,
  aqe,
};

RerankMethod parse_rerank_method(const std::string& name);
std::string rerank_method_name(RerankMethod m);

/// Which identity's cohort statistics "znorm" refers to. The default maps
/// znorm to query-side statistics (a single positive affine map per query,
/// hence rank-invariant) and tnorm to candidate-side; the alternate mapping
/// swaps the two names. Symmetric methods are unaffected.
enum class SideConvention { znorm_query_side, znorm_gallery_side };

/// A reranking configuration plus the verbatim configuration code it was
/// parsed from. Codes look like `K400_C500_S42`, `K400_N200_scan2000`,
/// `K3_a2.0`, `K200_lk10_a0p950_it5`, optionally prefixed with `internal_`
/// or `ext_<label>_size<C>_` and suffixed with `_seed<S>`; emit() returns
/// the original string byte-for-byte for report labeling.
struct RerankSpec {
  RerankMethod method = RerankMethod::bestofk;
  std::string code;

  std::size_t shortlist_k = 0;  // K token (for aqe this is the neighbor count)

  bool cohort_external = false;
  std::string cohort_label;      // ext_<label>
  std::size_t cohort_size = 0;   // C or size token (0 = whole source pool)
  std::uint64_t cohort_seed = 0; // S or seed token
  bool has_cohort_seed = false;

  std::size_t n_top = 0;  // N token: adaptive top-N (label-only for plain norms)
  std::size_t scan = 0;   // scan token: candidates scanned for adaptive stats

  std::size_t local_k = 0;  // lk token (diffusion)
  double alpha = 0.0;       // a token (diffusion / aqe)
  int iterations = 0;       // it token (diffusion)

  std::size_t qe_k = 0;     // aqe: mirrors the K token
  double qe_alpha = 0.0;    // aqe: mirrors the a token

  static RerankSpec parse(RerankMethod method, const std::string& code);
  const std::string& emit() const { return code; }
  void validate() const;
};

/// Impostor embeddings used to estimate normalization statistics.
struct Cohort {
  bool external = false;
  std::string label;
  std::vector<std::string> subject_ids;
  Matrix embeddings;  // dim x C unit columns
  std::uint64_t seed = 0;

  std::size_t size() const { return subject_ids.size(); }
};

/// Seeded subsample of the gallery itself (size 0 = everything).
Cohort make_internal_cohort(const Gallery& gallery, std::size_t size,
                            std::uint64_t seed);

/// Seeded subsample of an external pool; verifies subject disjointness
/// against the evaluation gallery.
Cohort make_external_cohort(const std::vector<EmbeddingRecord>& pool,
                            const std::string& label, std::size_t size,
                            std::uint64_t seed, const Gallery& gallery);

struct NormStats {
  double mu = 0.0;
  double sigma = 0.0;
  std::size_t n_used = 0;
};

/// Mean and sample (n-1) standard deviation of cosine(v, member) over every
/// cohort member. Throws DegenerateCohort when sigma < 1e-9.
NormStats side_stats(const Vector& v, const Cohort& cohort);

/// side_stats for every gallery record (tnorm/snorm/cnorm candidate side),
/// indexed by gallery position.
std::vector<NormStats> candidate_side_stats(const Gallery& gallery,
                                            const Cohort& cohort,
                                            int threads = 1);

/// Affine score normalization. query_stats feeds the query side,
/// per_gallery_stats (indexed by gallery position) the candidate side; the
/// side convention decides which side "znorm"/"tnorm" name. snorm averages
/// the two sides; cnorm pools both sides' score samples before normalizing.
Shortlist normalize_scores(const Shortlist& shortlist, RerankMethod method,
                           const NormStats& query_stats,
                           const std::vector<NormStats>& per_gallery_stats,
                           SideConvention convention =
                               SideConvention::znorm_query_side);

/// Adaptive impostor statistics: rank cohort members admissible for
/// `own_subject` (different subject) by similarity to v, restrict to the
/// `scan` highest, take the n_top highest scores. Throws
/// AdaptiveCohortTooSmall when fewer than n_top admissible members exist.
NormStats adaptive_stats(const Vector& v, const std::string& own_subject,
                         const Cohort& cohort, std::size_t n_top,
                         std::size_t scan);

/// adaptive_stats for every gallery record, for reuse across queries.
std::vector<NormStats> adaptive_candidate_stats(const Gallery& gallery,
                                                const Cohort& cohort,
                                                std::size_t n_top,
                                                std::size_t scan,
                                                int threads = 1);

/// Symmetric adaptive normalization: s' = ((s-mu_q)/sigma_q +
/// (s-mu_c)/sigma_c)/2 with both sides' statistics adaptive.
/// candidate_cache, when given, must come from adaptive_candidate_stats with
/// the same cohort and spec.
Shortlist as_norm(const Shortlist& shortlist, const Vector& query,
                  const std::string& query_subject, const Gallery& gallery,
                  const Cohort& cohort, const RerankSpec& spec,
                  const std::vector<NormStats>* candidate_cache = nullptr);

/// Row-stochastic symmetric k-NN affinity graph over gallery embeddings
/// (edge when either endpoint lists the other among its local_k nearest;
/// weight max(cosine, 0); rows sum to 1 unless isolated).
struct DiffusionGraph {
  std::vector<std::size_t> offsets;  // CSR row starts, size N+1
  std::vector<std::size_t> columns;
  std::vector<double> weights;
};

DiffusionGraph build_knn_graph(const Gallery& gallery, std::size_t local_k,
                               int threads = 1);

/// Score propagation: f starts as raw scores on the shortlist support and is
/// iterated f <- alpha*S*f + (1-alpha)*f0; entries are rescored by the final
/// f and re-sorted.
Shortlist diffuse_one(const Shortlist& shortlist, const DiffusionGraph& graph,
                      std::size_t n_gallery, double alpha, int iterations);

std::vector<Shortlist> diffuse(const std::vector<Shortlist>& shortlists,
                               const Gallery& gallery, const RerankSpec& spec,
                               int threads = 1);

/// Query expansion: q' = l2_normalize(q + sum over the top qe_k entries of
/// max(score,0)^qe_alpha * candidate), then retrieval is re-run with q'.
/// qe_k = 0 keeps the expansion set at just the query (identity on
/// rankings). new_k = 0 reuses the input shortlist length.
Shortlist alpha_qe(const Vector& query, const std::string& query_exam_id,
                   const Shortlist& shortlist, const Gallery& gallery,
                   std::size_t qe_k, double qe_alpha, std::size_t new_k = 0,
                   std::size_t exclude_index = Gallery::npos);

/// One identity's fused retrieval score: the maximum over its exams.
struct IdentityScore {
  std::string subject_id;
  double score = 0.0;
  std::string best_exam_id;
};

/// Groups shortlist entries by subject and ranks identities by their best
/// entry (score descending, ties by ascending subject_id).
std::vector<IdentityScore> best_of_k(const Shortlist& shortlist);

}  // namespace ecgid

#include "ecgid/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ecgid/parallel.hpp"
#include "ecgid/prng.hpp"

namespace ecgid {
namespace {

constexpr double kSigmaFloor = 1e-9;

/// Mean and sample sd of a score list; sigma is 0 when n < 2.
NormStats stats_of(const std::vector<double>& scores) {
  NormStats s;
  s.n_used = scores.size();
  if (scores.empty()) return s;
  double sum = 0.0;
  for (double v : scores) sum += v;
  s.mu = sum / static_cast<double>(scores.size());
  if (scores.size() >= 2) {
    double ss = 0.0;
    for (double v : scores) ss += (v - s.mu) * (v - s.mu);
    s.sigma = std::sqrt(ss / static_cast<double>(scores.size() - 1));
  }
  return s;
}

Cohort subsample_cohort(const std::vector<std::string>& subjects,
                        const Matrix& embeddings, std::size_t size,
                        std::uint64_t seed) {
  Cohort c;
  c.seed = seed;
  const std::size_t n = subjects.size();
  if (size == 0 || size >= n) {
    c.subject_ids = subjects;
    c.embeddings = embeddings;
    return c;
  }
  Rng rng = make_rng(seed, {0x636f686fULL});  // cohort stream
  auto chosen = sample_without_replacement(n, size, rng);
  std::sort(chosen.begin(), chosen.end());
  c.subject_ids.reserve(size);
  c.embeddings.resize(embeddings.rows(), static_cast<Eigen::Index>(size));
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    c.subject_ids.push_back(subjects[chosen[i]]);
    c.embeddings.col(static_cast<Eigen::Index>(i)) =
        embeddings.col(static_cast<Eigen::Index>(chosen[i]));
  }
  return c;
}

double affine(double s, const NormStats& st) {
  if (st.n_used < 2) {
    throw NormalizationError(
        "normalize_scores: required cohort statistics missing");
  }
  if (st.sigma < kSigmaFloor) {
    throw DegenerateCohort("normalize_scores: sigma below 1e-9");
  }
  return (s - st.mu) / st.sigma;
}

/// Union-of-samples statistics from the two sides' summaries (exact).
NormStats pooled(const NormStats& a, const NormStats& b) {
  if (a.n_used < 2 || b.n_used < 2) {
    throw NormalizationError("pooled stats need both sides present");
  }
  NormStats p;
  p.n_used = a.n_used + b.n_used;
  const double na = static_cast<double>(a.n_used);
  const double nb = static_cast<double>(b.n_used);
  p.mu = (na * a.mu + nb * b.mu) / (na + nb);
  const double ss = (na - 1.0) * a.sigma * a.sigma +
                    (nb - 1.0) * b.sigma * b.sigma +
                    na * (a.mu - p.mu) * (a.mu - p.mu) +
                    nb * (b.mu - p.mu) * (b.mu - p.mu);
  p.sigma = std::sqrt(ss / (na + nb - 1.0));
  return p;
}

}  // namespace

Cohort make_internal_cohort(const Gallery& gallery, std::size_t size,
                            std::uint64_t seed) {
  if (gallery.empty()) {
    throw EmptyGalleryError("make_internal_cohort: empty gallery");
  }
  std::vector<std::string> subjects;
  subjects.reserve(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    subjects.push_back(gallery.record(i).subject_id);
  }
  Cohort c = subsample_cohort(subjects, gallery.matrix(), size, seed);
  c.external = false;
  c.label = "internal";
  return c;
}

Cohort make_external_cohort(const std::vector<EmbeddingRecord>& pool,
                            const std::string& label, std::size_t size,
                            std::uint64_t seed, const Gallery& gallery) {
  if (pool.empty()) {
    throw EmptyGalleryError("make_external_cohort: empty pool");
  }
  std::vector<std::string> subjects;
  subjects.reserve(pool.size());
  Matrix embeddings(pool[0].embedding.size(),
                    static_cast<Eigen::Index>(pool.size()));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].embedding.size() != embeddings.rows()) {
      throw DimensionError("make_external_cohort: mixed dimensions");
    }
    subjects.push_back(pool[i].subject_id);
    embeddings.col(static_cast<Eigen::Index>(i)) =
        l2_normalize(pool[i].embedding);
  }
  Cohort c = subsample_cohort(subjects, embeddings, size, seed);
  c.external = true;
  c.label = label;

  std::set<std::string> gallery_subjects;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    gallery_subjects.insert(gallery.record(i).subject_id);
  }
  for (const auto& s : c.subject_ids) {
    if (gallery_subjects.count(s)) {
      throw ConfigError("external cohort shares subject '" + s +
                        "' with the evaluation gallery");
    }
  }
  return c;
}

NormStats side_stats(const Vector& v, const Cohort& cohort) {
  if (cohort.size() < 2) {
    throw DegenerateCohort("side_stats: cohort must have >= 2 members");
  }
  if (v.size() != cohort.embeddings.rows()) {
    throw DimensionError("side_stats: dimension mismatch");
  }
  const Vector scores = cohort.embeddings.transpose() * v;
  std::vector<double> list(scores.data(), scores.data() + scores.size());
  NormStats s = stats_of(list);
  if (s.sigma < kSigmaFloor) {
    throw DegenerateCohort("side_stats: impostor score sd below 1e-9");
  }
  return s;
}

std::vector<NormStats> candidate_side_stats(const Gallery& gallery,
                                            const Cohort& cohort,
                                            int threads) {
  std::vector<NormStats> out(gallery.size());
  parallel_for(0, gallery.size(), threads, [&](std::size_t i) {
    out[i] = side_stats(gallery.matrix().col(static_cast<Eigen::Index>(i)),
                        cohort);
  });
  return out;
}

Shortlist normalize_scores(const Shortlist& shortlist, RerankMethod method,
                           const NormStats& query_stats,
                           const std::vector<NormStats>& per_gallery_stats,
                           SideConvention convention) {
  // Resolve the method name to the sides actually used.
  bool use_query = false, use_candidate = false, pool_sides = false;
  switch (method) {
    case RerankMethod::znorm:
      use_query = convention == SideConvention::znorm_query_side;
      use_candidate = !use_query;
      break;
    case RerankMethod::tnorm:
      use_candidate = convention == SideConvention::znorm_query_side;
      use_query = !use_candidate;
      break;
    case RerankMethod::snorm:
      use_query = use_candidate = true;
      break;
    case RerankMethod::cnorm:
      use_query = use_candidate = pool_sides = true;
      break;
    default:
      throw ConfigError("normalize_scores: method " +
                        rerank_method_name(method) +
                        " is not an affine normalization");
  }

  Shortlist out = shortlist;
  for (auto& e : out.entries) {
    const double s = e.current_score;
    if (pool_sides) {
      if (e.gallery_index >= per_gallery_stats.size()) {
        throw NormalizationError("normalize_scores: candidate stats missing");
      }
      e.current_score =
          affine(s, pooled(query_stats, per_gallery_stats[e.gallery_index]));
      continue;
    }
    double acc = 0.0;
    int sides = 0;
    if (use_query) {
      acc += affine(s, query_stats);
      ++sides;
    }
    if (use_candidate) {
      if (e.gallery_index >= per_gallery_stats.size()) {
        throw NormalizationError("normalize_scores: candidate stats missing");
      }
      acc += affine(s, per_gallery_stats[e.gallery_index]);
      ++sides;
    }
    e.current_score = acc / sides;
  }
  sort_shortlist(out);
  return out;
}

NormStats adaptive_stats(const Vector& v, const std::string& own_subject,
                         const Cohort& cohort, std::size_t n_top,
                         std::size_t scan) {
  if (n_top < 1) throw ConfigError("adaptive_stats: N must be >= 1");
  if (scan < n_top) throw ConfigError("adaptive_stats: scan must be >= N");
  const Vector scores = cohort.embeddings.transpose() * v;
  std::vector<double> admissible;
  admissible.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (cohort.subject_ids[i] != own_subject) {
      admissible.push_back(scores[static_cast<Eigen::Index>(i)]);
    }
  }
  if (admissible.size() < n_top) {
    throw AdaptiveCohortTooSmall(
        "adaptive_stats: " + std::to_string(admissible.size()) +
        " admissible impostors, need " + std::to_string(n_top));
  }
  // The scan cap bounds the candidates examined; since both orderings use
  // the same score, the top-N multiset is unchanged for any scan >= N.
  const std::size_t examine = std::min(scan, admissible.size());
  std::partial_sort(admissible.begin(),
                    admissible.begin() + static_cast<std::ptrdiff_t>(examine),
                    admissible.end(), std::greater<double>{});
  admissible.resize(n_top);
  NormStats s = stats_of(admissible);
  // Adaptive cohorts keep going on degenerate spreads (including N=1, where
  // a sample sd does not exist): the floor makes the affine map defined.
  s.sigma = std::max(s.sigma, kSigmaFloor);
  return s;
}

std::vector<NormStats> adaptive_candidate_stats(const Gallery& gallery,
                                                const Cohort& cohort,
                                                std::size_t n_top,
                                                std::size_t scan,
                                                int threads) {
  std::vector<NormStats> out(gallery.size());
  parallel_for(0, gallery.size(), threads, [&](std::size_t i) {
    out[i] = adaptive_stats(gallery.matrix().col(static_cast<Eigen::Index>(i)),
                            gallery.record(i).subject_id, cohort, n_top, scan);
  });
  return out;
}

Shortlist as_norm(const Shortlist& shortlist, const Vector& query,
                  const std::string& query_subject, const Gallery& gallery,
                  const Cohort& cohort, const RerankSpec& spec,
                  const std::vector<NormStats>* candidate_cache) {
  const NormStats qstats =
      adaptive_stats(query, query_subject, cohort, spec.n_top, spec.scan);
  Shortlist out = shortlist;
  for (auto& e : out.entries) {
    NormStats cstats;
    if (candidate_cache != nullptr) {
      cstats = candidate_cache->at(e.gallery_index);
    } else {
      cstats = adaptive_stats(
          gallery.matrix().col(static_cast<Eigen::Index>(e.gallery_index)),
          e.subject_id, cohort, spec.n_top, spec.scan);
    }
    const double s = e.current_score;
    e.current_score =
        0.5 * ((s - qstats.mu) / qstats.sigma + (s - cstats.mu) / cstats.sigma);
  }
  sort_shortlist(out);
  return out;
}

DiffusionGraph build_knn_graph(const Gallery& gallery, std::size_t local_k,
                               int threads) {
  if (local_k < 1) throw ConfigError("build_knn_graph: local_k must be >= 1");
  const std::size_t n = gallery.size();

  // Directed neighbor lists first (each node's local_k nearest others).
  std::vector<std::vector<std::size_t>> neighbors(n);
  parallel_for(0, n, threads, [&](std::size_t i) {
    const Shortlist s =
        gallery.top_k(gallery.matrix().col(static_cast<Eigen::Index>(i)),
                      gallery.record(i).exam_id, local_k, i);
    neighbors[i].reserve(s.entries.size());
    for (const auto& e : s.entries) neighbors[i].push_back(e.gallery_index);
  });

  // Symmetrize: an edge exists when either endpoint lists the other.
  std::vector<std::set<std::size_t>> adjacency(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : neighbors[i]) {
      adjacency[i].insert(j);
      adjacency[j].insert(i);
    }
  }

  DiffusionGraph g;
  g.offsets.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    g.offsets[i + 1] = g.offsets[i] + adjacency[i].size();
  }
  g.columns.resize(g.offsets[n]);
  g.weights.resize(g.offsets[n]);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pos = g.offsets[i];
    double row_sum = 0.0;
    for (std::size_t j : adjacency[i]) {
      const double w = std::max(
          gallery.matrix().col(static_cast<Eigen::Index>(i)).dot(
              gallery.matrix().col(static_cast<Eigen::Index>(j))),
          0.0);
      g.columns[pos] = j;
      g.weights[pos] = w;
      row_sum += w;
      ++pos;
    }
    if (row_sum > 0.0) {
      for (std::size_t p = g.offsets[i]; p < g.offsets[i + 1]; ++p) {
        g.weights[p] /= row_sum;
      }
    }
  }
  return g;
}

Shortlist diffuse_one(const Shortlist& shortlist, const DiffusionGraph& graph,
                      std::size_t n_gallery, double alpha, int iterations) {
  std::vector<double> f0(n_gallery, 0.0);
  for (const auto& e : shortlist.entries) {
    f0[e.gallery_index] = e.raw_score;
  }
  std::vector<double> f = f0;
  std::vector<double> next(n_gallery, 0.0);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n_gallery; ++i) {
      double acc = 0.0;
      for (std::size_t p = graph.offsets[i]; p < graph.offsets[i + 1]; ++p) {
        acc += graph.weights[p] * f[graph.columns[p]];
      }
      next[i] = alpha * acc + (1.0 - alpha) * f0[i];
    }
    f.swap(next);
  }
  Shortlist out = shortlist;
  for (auto& e : out.entries) e.current_score = f[e.gallery_index];
  sort_shortlist(out);
  return out;
}

std::vector<Shortlist> diffuse(const std::vector<Shortlist>& shortlists,
                               const Gallery& gallery, const RerankSpec& spec,
                               int threads) {
  const DiffusionGraph graph =
      build_knn_graph(gallery, spec.local_k, threads);
  std::vector<Shortlist> out(shortlists.size());
  parallel_for(0, shortlists.size(), threads, [&](std::size_t q) {
    out[q] = diffuse_one(shortlists[q], graph, gallery.size(), spec.alpha,
                         spec.iterations);
  });
  return out;
}

Shortlist alpha_qe(const Vector& query, const std::string& query_exam_id,
                   const Shortlist& shortlist, const Gallery& gallery,
                   std::size_t qe_k, double qe_alpha, std::size_t new_k,
                   std::size_t exclude_index) {
  Vector expanded = query;  // the query itself enters with weight 1
  const std::size_t use = std::min(qe_k, shortlist.entries.size());
  for (std::size_t i = 0; i < use; ++i) {
    const auto& e = shortlist.entries[i];
    const double w = std::pow(std::max(e.current_score, 0.0), qe_alpha);
    expanded += w * gallery.matrix().col(
                        static_cast<Eigen::Index>(e.gallery_index));
  }
  // An empty expansion set must reproduce the baseline bit-exactly, so the
  // unit query skips the (last-ulp perturbing) renormalization.
  if (use > 0) expanded = l2_normalize(expanded);
  const std::size_t k = new_k > 0 ? new_k : shortlist.entries.size();
  return gallery.top_k(expanded, query_exam_id, k, exclude_index);
}

std::vector<IdentityScore> best_of_k(const Shortlist& shortlist) {
  std::vector<IdentityScore> out;
  for (const auto& e : shortlist.entries) {
    auto it = std::find_if(out.begin(), out.end(), [&](const IdentityScore& g) {
      return g.subject_id == e.subject_id;
    });
    if (it == out.end()) {
      out.push_back({e.subject_id, e.current_score, e.exam_id});
    } else if (e.current_score > it->score) {
      it->score = e.current_score;
      it->best_exam_id = e.exam_id;
    }
  }
  std::sort(out.begin(), out.end(),
            [](const IdentityScore& a, const IdentityScore& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.subject_id < b.subject_id;
            });
  return out;
}

}  // namespace ecgid
